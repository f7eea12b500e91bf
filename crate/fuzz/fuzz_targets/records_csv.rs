#![no_main]

use libfuzzer_sys::fuzz_target;
use waterweights_core::pathsim::{read_records_csv, write_records_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_records_csv(data) {
        let mut out = Vec::new();
        write_records_csv(&records, &mut out).expect("write to memory");
        assert_eq!(read_records_csv(out.as_slice()).expect("reparses"), records);
    }
});
