#![no_main]

use libfuzzer_sys::fuzz_target;
use waterweights_core::ConsensusSnapshot;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(snapshot) = ConsensusSnapshot::from_json(text) {
        let json = snapshot.to_json();
        assert_eq!(ConsensusSnapshot::from_json(&json).expect("reparses").to_json(), json);
    }
});
