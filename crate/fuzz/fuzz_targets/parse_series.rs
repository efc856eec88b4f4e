#![no_main]

use bayeskit::io::{parse_bytes, Dataset, Schema, Series};
use bayeskit::mtd::{encode_changes, ChainData};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    match parse_bytes(data, Schema::Series) {
        Ok(Dataset::Series(Series::Rates(r))) => {
            if let Ok(codes) = encode_changes(&r, 9) {
                let _ = ChainData::from_codes(&codes, 3, 1);
            }
        }
        Ok(Dataset::Series(Series::Codes(c))) => {
            let m = c.iter().copied().max().unwrap_or(0).min(64);
            let _ = ChainData::from_codes(&c, m, 1);
        }
        _ => {}
    }
});
