#![no_main]

use libfuzzer_sys::fuzz_target;
use waterweights_core::pathsim::AdversarySpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = AdversarySpec::from_json(text);
    }
});
