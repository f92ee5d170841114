#![no_main]

use libfuzzer_sys::fuzz_target;
use speechscreen::features::FeatureRegistry;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(reg) = FeatureRegistry::parse_listing(text) {
        let again = FeatureRegistry::parse_listing(&reg.to_listing()).expect("listing re-parses");
        assert_eq!(again.to_listing(), reg.to_listing());
    }
});
