#![no_main]

use libfuzzer_sys::fuzz_target;
use waterweights_core::metrics::{guessing_entropy, JointDistribution};

fuzz_target!(|data: &[u8]| {
    if let Ok(jd) = JointDistribution::read_csv(data) {
        if jd.n_guards() * jd.n_exits() <= 4096 {
            let trace = guessing_entropy(&jd);
            assert!(trace.g.is_finite());
        }
    }
});
