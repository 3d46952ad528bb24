#![no_main]

use libfuzzer_sys::fuzz_target;
use wlab::report::RunReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(report) = serde_json::from_slice::<RunReport>(data) {
        let json = serde_json::to_string(&report).expect("report serializes");
        let again: RunReport = serde_json::from_str(&json).expect("serialized report parses");
        assert_eq!(serde_json::to_string(&again).unwrap(), json);
    }
});
