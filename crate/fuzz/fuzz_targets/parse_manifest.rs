#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use speechscreen::corpus::parse_manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_manifest(data, Path::new("/corpus")) {
        assert_eq!(m.counts().total(), m.recordings.len());
    }
});
