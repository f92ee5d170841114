use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{decode_wav, ClassCounts, CorpusError, DatasetManifest, Label, RecordingRef};

/// Recordings shorter than this are flagged and excluded.
pub const MIN_RECORDING_SECONDS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    MissingFile {
        recording: RecordingRef,
        path: PathBuf,
    },
    Undecodable {
        recording: RecordingRef,
        path: PathBuf,
        reason: String,
    },
    TooShort {
        recording: RecordingRef,
        duration_s: f64,
    },
    /// A dataset without both classes cannot be evaluated.
    SingleClass {
        dataset_id: String,
        missing: Label,
    },
}

impl Finding {
    pub fn recording(&self) -> Option<&RecordingRef> {
        match self {
            Finding::MissingFile { recording, .. }
            | Finding::Undecodable { recording, .. }
            | Finding::TooShort { recording, .. } => Some(recording),
            Finding::SingleClass { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub counts: BTreeMap<String, ClassCounts>,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn missing_files(&self) -> usize {
        self.findings
            .iter()
            .filter(|f| matches!(f, Finding::MissingFile { .. }))
            .count()
    }

    /// Recordings that lenient mode drops.
    pub fn flagged_recordings(&self) -> BTreeSet<RecordingRef> {
        self.findings
            .iter()
            .filter_map(|f| f.recording().cloned())
            .collect()
    }

    /// Datasets lacking one class after flagged recordings are removed.
    pub fn blocking_datasets(&self) -> Vec<String> {
        self.findings
            .iter()
            .filter_map(|f| match f {
                Finding::SingleClass { dataset_id, .. } => Some(dataset_id.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Check every recording of a manifest: presence, decodability, minimum
/// duration, and per-dataset class composition.
///
/// Class composition is judged on the recordings that survive the per-file
/// checks, so a dataset whose only control recording is unreadable is
/// reported as single-class as well.
pub fn validate_dataset(manifest: &DatasetManifest) -> ValidationReport {
    let per_file: Vec<Option<Finding>> = manifest
        .recordings
        .par_iter()
        .map(|r| {
            let recording = r.recording_ref();
            if !r.audio_path.is_file() {
                return Some(Finding::MissingFile {
                    recording,
                    path: r.audio_path.clone(),
                });
            }
            match decode_wav(&r.audio_path) {
                Err(CorpusError::Io { .. }) => Some(Finding::MissingFile {
                    recording,
                    path: r.audio_path.clone(),
                }),
                Err(e) => Some(Finding::Undecodable {
                    recording,
                    path: r.audio_path.clone(),
                    reason: e.to_string(),
                }),
                Ok(buf) if buf.duration_s() < MIN_RECORDING_SECONDS => Some(Finding::TooShort {
                    recording,
                    duration_s: buf.duration_s(),
                }),
                Ok(_) => None,
            }
        })
        .collect();

    let mut findings: Vec<Finding> = Vec::new();
    let mut usable: BTreeMap<String, ClassCounts> = BTreeMap::new();
    for (r, f) in manifest.recordings.iter().zip(per_file) {
        usable.entry(r.dataset_id.clone()).or_default();
        match f {
            Some(f) => findings.push(f),
            None => usable.get_mut(&r.dataset_id).unwrap().add(r.label),
        }
    }
    for (dataset_id, c) in &usable {
        if c.pd == 0 {
            findings.push(Finding::SingleClass {
                dataset_id: dataset_id.clone(),
                missing: Label::Parkinson,
            });
        }
        if c.hc == 0 {
            findings.push(Finding::SingleClass {
                dataset_id: dataset_id.clone(),
                missing: Label::Control,
            });
        }
    }
    ValidationReport {
        counts: manifest.counts_by_dataset(),
        findings,
    }
}
