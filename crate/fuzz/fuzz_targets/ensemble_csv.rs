#![no_main]

use libfuzzer_sys::fuzz_target;
use wlab::paths::io::{ensemble_from_csv, ensemble_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ens) = ensemble_from_csv(text) {
        let csv = ensemble_to_csv(&ens, &[]);
        let again = ensemble_from_csv(&csv).expect("written CSV must parse");
        assert_eq!(ensemble_to_csv(&again, &[]), csv);
    }
});
