#![no_main]

use heatmap_eval_cli::arch::parse_arch;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_arch(text);
    }
});
