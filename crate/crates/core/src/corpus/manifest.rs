use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use super::{ClassCounts, CorpusError, Label, RecordingMeta};

pub const MANIFEST_HEADER: [&str; 4] = ["dataset_id", "subject_id", "label", "audio_path"];

/// Recordings listed by a manifest. Class counts are always derived from the
/// recordings, never stored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub recordings: Vec<RecordingMeta>,
}

impl DatasetManifest {
    pub fn counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for r in &self.recordings {
            c.add(r.label);
        }
        c
    }

    pub fn counts_by_dataset(&self) -> BTreeMap<String, ClassCounts> {
        let mut out: BTreeMap<String, ClassCounts> = BTreeMap::new();
        for r in &self.recordings {
            out.entry(r.dataset_id.clone()).or_default().add(r.label);
        }
        out
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        self.counts_by_dataset().into_keys().collect()
    }
}

/// Read a manifest from disk. Relative audio paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&bytes, base)
}

/// Parse manifest CSV bytes. `base_dir` anchors relative audio paths.
pub fn parse_manifest(bytes: &[u8], base_dir: &Path) -> Result<DatasetManifest, CorpusError> {
    let malformed = |m: String| CorpusError::MalformedManifest(m);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(malformed("empty file".into())),
        Some(r) => r.map_err(|e| malformed(e.to_string()))?,
    };
    let header: Vec<&str> = header.iter().collect();
    if header != MANIFEST_HEADER {
        return Err(malformed(format!(
            "header must be exactly `{}`, got `{}`",
            MANIFEST_HEADER.join(","),
            header.join(",")
        )));
    }

    let mut seen = HashSet::new();
    let mut recordings = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(malformed(format!(
                "line {line}: expected 4 fields, got {}",
                rec.len()
            )));
        }
        let (dataset_id, subject_id, label, audio_path) = (&rec[0], &rec[1], &rec[2], &rec[3]);
        if dataset_id.is_empty() || subject_id.is_empty() || audio_path.is_empty() {
            return Err(malformed(format!("line {line}: empty field")));
        }
        let label = match label {
            "0" => Label::Control,
            "1" => Label::Parkinson,
            other => {
                return Err(CorpusError::UnknownLabel {
                    label: other.to_string(),
                    line,
                })
            }
        };
        if !seen.insert((dataset_id.to_string(), subject_id.to_string())) {
            return Err(CorpusError::DuplicateSubject {
                dataset_id: dataset_id.to_string(),
                subject_id: subject_id.to_string(),
                line,
            });
        }
        let p = PathBuf::from(audio_path);
        let audio_path = if p.is_absolute() { p } else { base_dir.join(p) };
        recordings.push(RecordingMeta {
            dataset_id: dataset_id.to_string(),
            subject_id: subject_id.to_string(),
            label,
            audio_path,
        });
    }
    Ok(DatasetManifest { recordings })
}
