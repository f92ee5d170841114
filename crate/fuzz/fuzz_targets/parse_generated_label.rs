#![no_main]

use libfuzzer_sys::fuzz_target;
use speechscreen::backends::parse_generated_label;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_generated_label(text);
    }
});
