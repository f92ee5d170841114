#![no_main]

use libfuzzer_sys::fuzz_target;
use speechscreen::pipeline::{parse_config_text, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_config_text(text);
    let mut cfg = RunConfig::default();
    let _ = cfg.apply_text(text);
});
