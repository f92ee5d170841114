//! Dataset manifests, audio decoding and pre-flight validation.

mod manifest;
mod validate;
pub mod wav;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_manifest, parse_manifest, DatasetManifest, MANIFEST_HEADER};
pub use validate::{validate_dataset, Finding, ValidationReport, MIN_RECORDING_SECONDS};
pub use wav::decode_wav;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("duplicate subject {subject_id:?} in dataset {dataset_id:?} (line {line})")]
    DuplicateSubject {
        dataset_id: String,
        subject_id: String,
        line: u64,
    },
    #[error("unknown label {label:?} on line {line}; expected 0 or 1")]
    UnknownLabel { label: String, line: u64 },
    #[error("unsupported WAV encoding (format tag {format_tag:#06x}, {bits_per_sample} bits)")]
    UnsupportedEncoding {
        format_tag: u16,
        bits_per_sample: u16,
    },
    #[error("corrupt WAV file: {0}")]
    CorruptFile(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("audio contains non-finite samples")]
    NonFiniteAudio,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Diagnostic class. Serialized as the digit used in manifests and prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    /// Healthy control, digit 0.
    Control,
    /// Parkinson's disease, digit 1.
    Parkinson,
}

impl Label {
    pub fn from_digit(d: u8) -> Option<Label> {
        match d {
            0 => Some(Label::Control),
            1 => Some(Label::Parkinson),
            _ => None,
        }
    }

    pub fn digit(self) -> u8 {
        match self {
            Label::Control => 0,
            Label::Parkinson => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Parkinson
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Control => Label::Parkinson,
            Label::Parkinson => Label::Control,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.digit()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(d: u8) -> Result<Self, Self::Error> {
        Label::from_digit(d).ok_or_else(|| format!("label must be 0 or 1, got {d}"))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.digit())
    }
}

/// Identity of one recording: (dataset, subject). A subject contributes a
/// single recording per dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordingRef {
    pub dataset_id: String,
    pub subject_id: String,
}

impl fmt::Display for RecordingRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.dataset_id, self.subject_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub dataset_id: String,
    pub subject_id: String,
    pub label: Label,
    pub audio_path: PathBuf,
}

impl RecordingMeta {
    pub fn recording_ref(&self) -> RecordingRef {
        RecordingRef {
            dataset_id: self.dataset_id.clone(),
            subject_id: self.subject_id.clone(),
        }
    }
}

/// Mono audio at a known rate. Samples are finite and the buffer is never
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<AudioBuffer, CorpusError> {
        if sample_rate_hz == 0 {
            return Err(CorpusError::ZeroSampleRate);
        }
        if samples.is_empty() {
            return Err(CorpusError::EmptyAudio);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(CorpusError::NonFiniteAudio);
        }
        Ok(AudioBuffer {
            samples,
            sample_rate_hz,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Per-class tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub pd: usize,
    pub hc: usize,
}

impl ClassCounts {
    pub fn add(&mut self, label: Label) {
        match label {
            Label::Parkinson => self.pd += 1,
            Label::Control => self.hc += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.pd + self.hc
    }
}
