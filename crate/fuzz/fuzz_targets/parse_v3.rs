#![no_main]

use libfuzzer_sys::fuzz_target;
use waterweights_core::consensus::parse_v3_subset;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_v3_subset(text);
    }
});
