#![no_main]

use libfuzzer_sys::fuzz_target;
use waterweights_core::consensus::{parse_native, serialize_native};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(snapshot) = parse_native(text) {
        // Anything accepted must survive a write and reparse unchanged.
        let written = serialize_native(&snapshot);
        let back = parse_native(&written).expect("serialized snapshot reparses");
        assert_eq!(back.to_json(), snapshot.to_json());
    }
});
