#![no_main]

use bayeskit::simulate::{DpmmSim, HierSim, MtdSim, SpatialSim};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<HierSim>(data);
    let _ = serde_json::from_slice::<SpatialSim>(data);
    if let Ok(sim) = serde_json::from_slice::<MtdSim>(data) {
        let _ = sim.params();
    }
    let _ = serde_json::from_slice::<DpmmSim>(data);
});
