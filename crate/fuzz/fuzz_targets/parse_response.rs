#![no_main]

use libfuzzer_sys::fuzz_target;
use speechscreen::backends::{parse_response, prediction_from_response};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_response(text) {
        if let Ok(p) = prediction_from_response(&parsed) {
            assert!((0.0..=1.0).contains(&p.probability));
        }
    }
});
