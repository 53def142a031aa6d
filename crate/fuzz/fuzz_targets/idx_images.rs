#![no_main]

use heatmap_eval::datahub::parse_idx_images;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(images) = parse_idx_images(data, "fuzz") {
        for img in &images {
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
});
