#![no_main]

use heatmap_eval::datahub::parse_idx_labels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = parse_idx_labels(data, "fuzz") {
        assert!(labels.len() + 8 <= data.len());
    }
});
