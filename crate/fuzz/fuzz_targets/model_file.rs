#![no_main]

use heatmap_eval::netcore::{decode_model, encode_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_model(data) {
        // anything accepted must survive a round trip unchanged
        let again = decode_model(&encode_model(&model)).expect("re-encoded model decodes");
        assert_eq!(again, model);
    }
});
