#![no_main]

use libfuzzer_sys::fuzz_target;
use wlab::williams::{records_from_csv, records_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = records_from_csv(text) {
        let csv = records_to_csv(&records, &[]);
        let again = records_from_csv(&csv).expect("written CSV must parse");
        assert_eq!(records_to_csv(&again, &[]), csv);
    }
});
