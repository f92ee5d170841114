//! Replays the checked-in fuzz seeds through the same entry points as the
//! fuzz targets, so the corpora stay meaningful on stable toolchains.

use std::path::{Path, PathBuf};

use speechscreen::aggregation::{SegmentPrediction, SubjectDecision};
use speechscreen::backends::{parse_generated_label, parse_response, prediction_from_response};
use speechscreen::corpus::parse_manifest;
use speechscreen::corpus::wav::decode_wav_bytes;
use speechscreen::features::{FeatureRegistry, FeatureVector};
use speechscreen::pipeline::{parse_config_text, parse_jsonl, RunConfig};
use speechscreen::prompting::parse_serialized;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).expect("text seeds are utf-8")
}

#[test]
fn wav_seeds() {
    let mut decoded = 0;
    for (path, bytes) in seeds("decode_wav") {
        if let Ok(audio) = decode_wav_bytes(&bytes) {
            decoded += 1;
            assert!(audio.sample_rate_hz > 0, "{}", path.display());
            assert!(audio.samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0), "{}", path.display());
        }
    }
    assert!(decoded >= 5);
}

#[test]
fn manifest_seeds() {
    for (_, bytes) in seeds("parse_manifest") {
        if let Ok(m) = parse_manifest(&bytes, Path::new("/corpus")) {
            assert_eq!(m.counts().total(), m.recordings.len());
        }
    }
}

#[test]
fn config_seeds() {
    let mut applied = 0;
    for (_, bytes) in seeds("parse_config") {
        let _ = parse_config_text(text(&bytes));
        if RunConfig::default().apply_text(text(&bytes)).is_ok() {
            applied += 1;
        }
    }
    assert!(applied >= 2);
}

#[test]
fn registry_seeds() {
    for (path, bytes) in seeds("parse_registry_listing") {
        if let Ok(reg) = FeatureRegistry::parse_listing(text(&bytes)) {
            let again = FeatureRegistry::parse_listing(&reg.to_listing()).expect("listing re-parses");
            assert_eq!(again.to_listing(), reg.to_listing(), "{}", path.display());
        }
    }
    let v1 = seeds("parse_registry_listing")
        .into_iter()
        .find(|(p, _)| p.ends_with("v1.txt"))
        .unwrap();
    assert_eq!(FeatureRegistry::parse_listing(text(&v1.1)).unwrap(), FeatureRegistry::canonical());
}

#[test]
fn response_seeds() {
    for (path, bytes) in seeds("parse_response") {
        if let Ok(parsed) = parse_response(text(&bytes)) {
            if let Ok(p) = prediction_from_response(&parsed) {
                assert!((0.0..=1.0).contains(&p.probability), "{}", path.display());
            }
        }
    }
}

#[test]
fn label_and_list_seeds() {
    for (_, bytes) in seeds("parse_generated_label") {
        let _ = parse_generated_label(text(&bytes));
    }
    for (_, bytes) in seeds("parse_feature_list") {
        let _ = parse_serialized(text(&bytes));
    }
}

#[test]
fn jsonl_seeds() {
    for (path, bytes) in seeds("parse_jsonl") {
        let t = text(&bytes);
        let name = path.file_name().unwrap().to_str().unwrap();
        let f = parse_jsonl::<FeatureVector>(t);
        let p = parse_jsonl::<SegmentPrediction>(t);
        let d = parse_jsonl::<SubjectDecision>(t);
        match name {
            "features.jsonl" => assert!(f.is_ok()),
            "predictions.jsonl" => assert_eq!(p.unwrap().len(), 2),
            "decisions.jsonl" => assert!(d.is_ok()),
            _ => assert!(f.is_err() && p.is_err() && d.is_err()),
        }
    }
}
