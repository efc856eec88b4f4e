#![no_main]

use bayeskit::io::{parse_bytes, Schema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_bytes(data, Schema::PredictionGrid);
});
