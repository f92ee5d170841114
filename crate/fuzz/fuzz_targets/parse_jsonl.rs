#![no_main]

use libfuzzer_sys::fuzz_target;
use speechscreen::aggregation::{SegmentPrediction, SubjectDecision};
use speechscreen::features::FeatureVector;
use speechscreen::pipeline::parse_jsonl;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_jsonl::<FeatureVector>(text);
    let _ = parse_jsonl::<SegmentPrediction>(text);
    let _ = parse_jsonl::<SubjectDecision>(text);
});
