//! Prompt construction for text and audio backends.
//!
//! Feature prompts embed a `name: value, name: value` list in the text
//! template. Audio prompts carry the fixed instruction text plus a reference
//! to the preprocessed recording.

mod format;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeatureRegistry, FeatureVector, SegmentRef};

pub use format::{format_value, DEFAULT_SIG_DIGITS};

pub const LIST_PLACEHOLDER: &str = "{list}";

pub const FEATURE_TEMPLATE: &str = "Task: You are a clinical classification model. Based on the audio features extracted from a person's speech, classify whether a person has Parkinson's disease or not. Output 1 if the person has Parkinson's disease, or 0 if the person is healthy.\nInstruction: Respond with exactly one token: 0 or 1.\nNow solve the following.\nInput: {list}\nOutput:";

pub const AUDIO_TEMPLATE: &str = "You are an audio analysis model. Your task is to decide whether the speech characteristics are more consistent with healthy control speech or Parkinson's. Consider acoustic cues, including pitch variability, loudness variability over time, articulation precision of consonants, voice quality (breathy, hoarse, strained), speech rate, and rhythm. Make a balanced decision based only on the provided audio.\nOutput only a single digit: 0 = Healthy or 1 = Parkinson's disease.";

pub const FEATURE_TEMPLATE_SHA256: &str = "03e1791d50bf0b897e18bf65a0ff84cd39437b8b83c69f572fa57f3fe1325a02";
pub const AUDIO_TEMPLATE_SHA256: &str = "60debaa5c24d667fee0430557896d593bd1458abadf7a15355495010e00b0687";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("feature vector has {got} values for registry {version} with {expected} entries")]
    LengthMismatch {
        version: String,
        expected: usize,
        got: usize,
    },
    #[error("feature vector built for registry {vector}, serializing with {registry}")]
    VersionMismatch { vector: String, registry: String },
    #[error("audio file not found: {0}")]
    MissingAudio(PathBuf),
    #[error("malformed feature list: {0}")]
    MalformedList(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    FeatureText,
    Audio,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::FeatureText => "feature_text",
            Modality::Audio => "audio",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub modality: Modality,
    pub system_text: String,
    pub user_text: String,
    pub audio_ref: Option<PathBuf>,
    /// Which segment or recording the prompt describes. Never sent to a
    /// remote backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<SegmentRef>,
}

impl PromptPayload {
    pub fn with_origin(mut self, origin: SegmentRef) -> Self {
        self.origin = Some(origin);
        self
    }

    /// Hex SHA-256 over system text, a NUL byte, then user text.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system_text.as_bytes());
        h.update([0u8]);
        h.update(self.user_text.as_bytes());
        hex::encode(h.finalize())
    }

    /// The serialized list embedded in a feature prompt.
    pub fn feature_list(&self) -> Option<&str> {
        if self.modality != Modality::FeatureText {
            return None;
        }
        let (pre, post) = FEATURE_TEMPLATE.split_once(LIST_PLACEHOLDER)?;
        self.user_text.strip_prefix(pre)?.strip_suffix(post)
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Render a feature vector as `name: value` pairs in registry order.
pub fn serialize_features(
    fv: &FeatureVector,
    registry: &FeatureRegistry,
    sig_digits: usize,
) -> Result<String, PromptError> {
    if fv.registry_version != registry.version {
        return Err(PromptError::VersionMismatch {
            vector: fv.registry_version.clone(),
            registry: registry.version.clone(),
        });
    }
    if fv.values.len() != registry.len() {
        return Err(PromptError::LengthMismatch {
            version: registry.version.clone(),
            expected: registry.len(),
            got: fv.values.len(),
        });
    }
    let parts: Vec<String> = registry
        .names()
        .zip(&fv.values)
        .map(|(name, &v)| format!("{name}: {}", format_value(v, sig_digits)))
        .collect();
    Ok(parts.join(", "))
}

/// Split a serialized list back into `(name, value)` pairs.
pub fn parse_serialized(list: &str) -> Result<Vec<(String, f64)>, PromptError> {
    let bad = |m: String| PromptError::MalformedList(m);
    list.split(", ")
        .map(|pair| {
            let (name, value) = pair
                .split_once(": ")
                .ok_or_else(|| bad(format!("no `: ` in {pair:?}")))?;
            let v = value
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {value:?} for {name}")))?;
            Ok((name.to_string(), v))
        })
        .collect()
}

pub fn build_feature_prompt(serialized: &str) -> PromptPayload {
    PromptPayload {
        modality: Modality::FeatureText,
        system_text: String::new(),
        user_text: FEATURE_TEMPLATE.replacen(LIST_PLACEHOLDER, serialized, 1),
        audio_ref: None,
        origin: None,
    }
}

pub fn build_audio_prompt(recording_audio_path: &Path) -> Result<PromptPayload, PromptError> {
    if !recording_audio_path.is_file() {
        return Err(PromptError::MissingAudio(recording_audio_path.to_path_buf()));
    }
    Ok(PromptPayload {
        modality: Modality::Audio,
        system_text: String::new(),
        user_text: AUDIO_TEMPLATE.to_string(),
        audio_ref: Some(recording_audio_path.to_path_buf()),
        origin: None,
    })
}

/// One line of the prompt audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLogEntry {
    pub dataset_id: String,
    pub subject_id: String,
    pub segment_index: usize,
    pub modality: Modality,
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl PromptLogEntry {
    pub fn new(payload: &PromptPayload, include_text: bool) -> PromptLogEntry {
        let origin = payload.origin.clone().unwrap_or(SegmentRef {
            dataset_id: String::new(),
            subject_id: String::new(),
            segment_index: 0,
        });
        PromptLogEntry {
            dataset_id: origin.dataset_id,
            subject_id: origin.subject_id,
            segment_index: origin.segment_index,
            modality: payload.modality,
            prompt_sha256: payload.sha256(),
            text: include_text.then(|| payload.user_text.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureEntry, FeatureKind};

    fn fv(version: &str, values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            segment_ref: SegmentRef {
                dataset_id: "D".into(),
                subject_id: "S".into(),
                segment_index: 0,
            },
            registry_version: version.into(),
            values,
            imputed: vec![],
        }
    }

    fn two_entry_registry() -> FeatureRegistry {
        FeatureRegistry::new(
            "t",
            vec![
                FeatureEntry {
                    name: "a".into(),
                    kind: FeatureKind::JitterLocal,
                    unit: "ratio".into(),
                },
                FeatureEntry {
                    name: "b".into(),
                    kind: FeatureKind::ShimmerLocal,
                    unit: "ratio".into(),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_entry_caption_example() {
        let reg = FeatureRegistry::from_kinds("t", &[FeatureKind::JitterLocal]).unwrap();
        assert_eq!(serialize_features(&fv("t", vec![0.007]), &reg, 6).unwrap(), "jitter_local: 0.007");
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let s = serialize_features(&fv("t", vec![1.0, 2.0]), &two_entry_registry(), 6).unwrap();
        assert_eq!(s, "a: 1, b: 2");
    }

    #[test]
    fn mismatches_rejected() {
        let reg = two_entry_registry();
        assert!(matches!(
            serialize_features(&fv("t", vec![1.0]), &reg, 6),
            Err(PromptError::LengthMismatch { expected: 2, got: 1, .. })
        ));
        assert!(matches!(
            serialize_features(&fv("v9", vec![1.0, 2.0]), &reg, 6),
            Err(PromptError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn template_checksums() {
        assert_eq!(sha256_hex(FEATURE_TEMPLATE), FEATURE_TEMPLATE_SHA256);
        assert_eq!(sha256_hex(AUDIO_TEMPLATE), AUDIO_TEMPLATE_SHA256);
        assert!(FEATURE_TEMPLATE.contains("Respond with exactly one token: 0 or 1"));
        assert!(AUDIO_TEMPLATE.contains("Output only a single digit"));
        assert_eq!(FEATURE_TEMPLATE.matches(LIST_PLACEHOLDER).count(), 1);
    }

    #[test]
    fn feature_prompt_shape() {
        let p = build_feature_prompt("a: 1, b: 2");
        assert!(p.user_text.contains("You are a clinical classification model"));
        assert!(p.user_text.ends_with("Input: a: 1, b: 2\nOutput:"));
        assert!(p.system_text.is_empty());
        assert_eq!(p.feature_list(), Some("a: 1, b: 2"));
        assert_eq!(p, build_feature_prompt("a: 1, b: 2"));
    }

    #[test]
    fn audio_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.wav");
        std::fs::write(&path, b"x").unwrap();
        let p = build_audio_prompt(&path).unwrap();
        assert!(p.user_text.contains("You are an audio analysis model"));
        assert!(p.user_text.contains("0 = Healthy or 1 = Parkinson's disease"));
        assert_eq!(p.audio_ref.as_deref(), Some(path.as_path()));
        assert_eq!(p.feature_list(), None);
        assert_eq!(p, build_audio_prompt(&path).unwrap());
        assert_eq!(
            build_audio_prompt(&dir.path().join("nope.wav")),
            Err(PromptError::MissingAudio(dir.path().join("nope.wav")))
        );
    }

    #[test]
    fn canonical_round_trip() {
        let reg = FeatureRegistry::canonical();
        let values: Vec<f64> = (0..reg.len()).map(|i| (i as f64 - 30.0) * 0.37e-3 * 10f64.powi(i as i32 % 9)).collect();
        let s = serialize_features(&fv("v1", values.clone()), &reg, 6).unwrap();
        let back = parse_serialized(&s).unwrap();
        assert_eq!(back.len(), reg.len());
        for ((name, v), (expected_name, orig)) in back.iter().zip(reg.names().zip(&values)) {
            assert_eq!(name, expected_name);
            assert!((v - orig).abs() <= orig.abs() * 1e-5, "{name}: {v} vs {orig}");
        }
        let p = build_feature_prompt(&s);
        assert_eq!(p.feature_list(), Some(s.as_str()));
    }

    #[test]
    fn log_entry_hides_text_unless_asked() {
        let p = build_feature_prompt("a: 1").with_origin(SegmentRef {
            dataset_id: "D".into(),
            subject_id: "S1".into(),
            segment_index: 2,
        });
        let e = PromptLogEntry::new(&p, false);
        assert_eq!(e.subject_id, "S1");
        assert_eq!(e.prompt_sha256.len(), 64);
        assert!(e.text.is_none());
        assert!(!serde_json::to_string(&e).unwrap().contains("\"text\""));
        assert!(PromptLogEntry::new(&p, true).text.is_some());
    }
}
