#![no_main]

use heatmap_eval_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut cfg = RunConfig::default();
    if cfg.apply_text(text).is_ok() {
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).expect("written config parses");
    }
});
