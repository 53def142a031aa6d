#![no_main]

use heatmap_eval::datahub::{parse_cifar, CIFAR_RECORD_LEN};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((images, labels)) = parse_cifar(data, "fuzz") {
        assert_eq!(images.len(), labels.len());
        assert_eq!(images.len() * CIFAR_RECORD_LEN, data.len());
    }
});
