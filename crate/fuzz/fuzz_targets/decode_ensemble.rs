#![no_main]

use libfuzzer_sys::fuzz_target;
use wlab::paths::io::{decode_ensemble, encode_ensemble};

fuzz_target!(|data: &[u8]| {
    if let Ok(ens) = decode_ensemble(data) {
        let bytes = encode_ensemble(&ens);
        let again = decode_ensemble(&bytes).expect("re-encoded ensemble must decode");
        assert_eq!(encode_ensemble(&again), bytes);
    }
});
