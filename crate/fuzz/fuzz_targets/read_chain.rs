#![no_main]

use bayeskit::stats::PosteriorChain;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(chain) = PosteriorChain::read_csv(data) {
        let mut out = Vec::new();
        chain.write_csv(&mut out).expect("writing a parsed chain");
        let again = PosteriorChain::read_csv(out.as_slice()).expect("re-reading a written chain");
        assert_eq!(again.n_draws(), chain.n_draws());
    }
});
