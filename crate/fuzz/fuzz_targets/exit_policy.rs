#![no_main]

use libfuzzer_sys::fuzz_target;
use waterweights_core::consensus::ExitPolicy;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(policy) = text.parse::<ExitPolicy>() {
        let printed = policy.to_string();
        let again: ExitPolicy = printed.parse().expect("printed policy reparses");
        for port in [0u16, 1, 22, 80, 443, 6667, 65535] {
            assert_eq!(policy.accepts(port), again.accepts(port));
        }
    }
});
