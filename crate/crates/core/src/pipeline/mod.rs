//! End-to-end orchestration: validate, extract, infer, aggregate, evaluate,
//! report. Each stage reads and writes files in the output directory, so any
//! stage can be rerun on its own.

pub mod config;
pub mod jsonl;
pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{aggregate_all, SegmentPrediction, SubjectDecision};
use crate::backends::{build_backend, predict_batch, BackendError, BackendKind};
use crate::corpus::{decode_wav, load_manifest, validate_dataset, wav, DatasetManifest, Label, RecordingRef, ValidationReport};
use crate::evaluation::{evaluate_all, EvalError};
use crate::features::{extract_features, FeatureRegistry, FeatureVector, SegmentRef};
use crate::preprocess::{segment, standardize};
use crate::prompting::{build_audio_prompt, build_feature_prompt, serialize_features, PromptLogEntry, PromptPayload};

pub use config::{parse_config_text, ConfigError, ReportFormat, RunConfig, RunModality, KEYS};
pub use jsonl::parse_jsonl;
pub use report::{format_cell, render_report, RunReport};

pub const VALIDATION_FILE: &str = "validation.json";
pub const FEATURES_FILE: &str = "features.jsonl";
pub const RECORDINGS_FILE: &str = "recordings.jsonl";
pub const EXCLUDED_FILE: &str = "excluded.jsonl";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const RAW_FILE: &str = "raw.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const UNDECIDED_FILE: &str = "undecided.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_MD_FILE: &str = "report.md";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const RUN_RECORD_FILE: &str = "run_record.json";
pub const AUDIO_DIR: &str = "audio";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{stage}: backend failure at {at}: {source}")]
    Backend {
        stage: Stage,
        at: String,
        #[source]
        source: BackendError,
    },
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Backend { .. } => 3,
            PipelineError::Evaluation(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Extract,
    Infer,
    Aggregate,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Validate,
        Stage::Extract,
        Stage::Infer,
        Stage::Aggregate,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Extract => "extract",
            Stage::Infer => "infer",
            Stage::Aggregate => "aggregate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// The file whose presence marks the stage as done.
    pub fn output(self, modality: RunModality) -> &'static str {
        match self {
            Stage::Validate => VALIDATION_FILE,
            Stage::Extract => match modality {
                RunModality::Features => FEATURES_FILE,
                RunModality::Audio => RECORDINGS_FILE,
            },
            Stage::Infer => PREDICTIONS_FILE,
            Stage::Aggregate => DECISIONS_FILE,
            Stage::Evaluate => REPORT_FILE,
            Stage::Report => REPORT_MD_FILE,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A recording or segment left out of the run, and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub dataset_id: String,
    pub subject_id: String,
    pub segment_index: Option<usize>,
    pub stage: Stage,
    pub reason: String,
}

/// One preprocessed full recording for the audio modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub dataset_id: String,
    pub subject_id: String,
    pub audio_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLogEntry {
    pub dataset_id: String,
    pub subject_id: String,
    pub segment_index: usize,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub artifact: PathBuf,
    pub skipped: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditCounters {
    pub excluded_recordings: usize,
    pub excluded_segments: usize,
    pub imputed_values: usize,
    pub backend_calls: usize,
    pub invalid_outputs: usize,
    pub placeholder_probabilities: usize,
    pub undecided_subjects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    pub counters: AuditCounters,
}

fn path_in(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::Io {
        path: cfg.output_dir.clone(),
        source: e,
    })
}

fn load_run_manifest(cfg: &RunConfig) -> Result<DatasetManifest, PipelineError> {
    load_manifest(&cfg.manifest_path).map_err(|e| PipelineError::Validation(e.to_string()))
}

fn truth_map(manifest: &DatasetManifest) -> HashMap<RecordingRef, Label> {
    manifest
        .recordings
        .iter()
        .map(|r| (r.recording_ref(), r.label))
        .collect()
}

fn file_stem_for(index: usize, r: &RecordingRef) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect()
    };
    format!("{index:05}_{}_{}", clean(&r.dataset_id), clean(&r.subject_id))
}

pub fn stage_validate(cfg: &RunConfig) -> Result<ValidationReport, PipelineError> {
    ensure_out_dir(cfg)?;
    let manifest = load_run_manifest(cfg)?;
    let report = validate_dataset(&manifest);
    jsonl::write_json(&path_in(cfg, VALIDATION_FILE), &report)?;
    for f in &report.findings {
        log::warn!("validation: {}", serde_json::to_string(f).expect("finding serializes"));
    }
    if cfg.strict_validation && !report.is_clean() {
        return Err(PipelineError::Validation(format!(
            "{} finding(s) in strict mode; see {VALIDATION_FILE}",
            report.findings.len()
        )));
    }
    let flagged = report.flagged_recordings();
    if manifest.recordings.iter().all(|r| flagged.contains(&r.recording_ref())) {
        return Err(PipelineError::Validation("no usable recordings".into()));
    }
    let blocking = report.blocking_datasets();
    if manifest.dataset_ids().iter().all(|d| blocking.contains(d)) {
        return Err(PipelineError::Validation("every dataset lacks one class".into()));
    }
    Ok(report)
}

fn validation_for(cfg: &RunConfig) -> Result<ValidationReport, PipelineError> {
    let path = path_in(cfg, VALIDATION_FILE);
    if path.is_file() {
        jsonl::read_json(&path)
    } else {
        stage_validate(cfg)
    }
}

enum Extracted {
    Segments(Vec<FeatureVector>),
    Recording(RecordingEntry),
}

pub fn stage_extract(cfg: &RunConfig) -> Result<PathBuf, PipelineError> {
    ensure_out_dir(cfg)?;
    let manifest = load_run_manifest(cfg)?;
    let validation = validation_for(cfg)?;
    let flagged = validation.flagged_recordings();
    let registry = FeatureRegistry::by_version(&cfg.registry_version).map_err(|e| PipelineError::Stage {
        stage: Stage::Extract,
        message: e.to_string(),
    })?;
    if cfg.modality == RunModality::Audio {
        std::fs::create_dir_all(path_in(cfg, AUDIO_DIR)).map_err(|e| PipelineError::Io {
            path: path_in(cfg, AUDIO_DIR),
            source: e,
        })?;
    }

    let mut exclusions: Vec<Exclusion> = flagged
        .iter()
        .map(|r| Exclusion {
            dataset_id: r.dataset_id.clone(),
            subject_id: r.subject_id.clone(),
            segment_index: None,
            stage: Stage::Validate,
            reason: "flagged during validation".into(),
        })
        .collect();

    let per_recording: Vec<(Option<Extracted>, Vec<Exclusion>)> = manifest
        .recordings
        .par_iter()
        .enumerate()
        .filter(|(_, r)| !flagged.contains(&r.recording_ref()))
        .map(|(index, r)| {
            let rec = r.recording_ref();
            let exclude = |segment_index: Option<usize>, reason: String| Exclusion {
                dataset_id: rec.dataset_id.clone(),
                subject_id: rec.subject_id.clone(),
                segment_index,
                stage: Stage::Extract,
                reason,
            };
            let audio = match decode_wav(&r.audio_path) {
                Ok(a) => a,
                Err(e) => return (None, vec![exclude(None, e.to_string())]),
            };
            let std_audio = standardize(&audio, &cfg.preprocess);
            match cfg.modality {
                RunModality::Audio => {
                    let path = path_in(cfg, AUDIO_DIR).join(format!("{}.wav", file_stem_for(index, &rec)));
                    match wav::write_wav_f32(&path, &std_audio) {
                        Ok(()) => (
                            Some(Extracted::Recording(RecordingEntry {
                                dataset_id: rec.dataset_id.clone(),
                                subject_id: rec.subject_id.clone(),
                                audio_path: path,
                            })),
                            vec![],
                        ),
                        Err(e) => (None, vec![exclude(None, e.to_string())]),
                    }
                }
                RunModality::Features => {
                    let segments = match segment(&std_audio, &rec, &cfg.preprocess) {
                        Ok(s) => s,
                        Err(e) => return (None, vec![exclude(None, e.to_string())]),
                    };
                    let mut vectors = Vec::new();
                    let mut excluded = Vec::new();
                    for seg in &segments {
                        match extract_features(seg, &registry) {
                            Ok(v) => vectors.push(v),
                            Err(e) => excluded.push(exclude(Some(seg.segment_index), e.to_string())),
                        }
                    }
                    if vectors.is_empty() {
                        excluded.push(exclude(None, "no segment yielded features".into()));
                        (None, excluded)
                    } else {
                        (Some(Extracted::Segments(vectors)), excluded)
                    }
                }
            }
        })
        .collect();

    let mut vectors = Vec::new();
    let mut entries = Vec::new();
    for (extracted, excluded) in per_recording {
        exclusions.extend(excluded);
        match extracted {
            Some(Extracted::Segments(v)) => vectors.extend(v),
            Some(Extracted::Recording(e)) => entries.push(e),
            None => {}
        }
    }
    for e in exclusions.iter().filter(|e| e.stage == Stage::Extract) {
        log::warn!("excluded {}/{} segment {:?}: {}", e.dataset_id, e.subject_id, e.segment_index, e.reason);
    }
    jsonl::write_jsonl(&path_in(cfg, EXCLUDED_FILE), &exclusions)?;
    if vectors.is_empty() && entries.is_empty() {
        return Err(PipelineError::Stage {
            stage: Stage::Extract,
            message: "nothing extracted".into(),
        });
    }
    let out = path_in(cfg, Stage::Extract.output(cfg.modality));
    match cfg.modality {
        RunModality::Features => jsonl::write_jsonl(&out, &vectors)?,
        RunModality::Audio => jsonl::write_jsonl(&out, &entries)?,
    }
    Ok(out)
}

fn build_payloads(cfg: &RunConfig) -> Result<Vec<PromptPayload>, PipelineError> {
    let stage_err = |message: String| PipelineError::Stage {
        stage: Stage::Infer,
        message,
    };
    match cfg.modality {
        RunModality::Features => {
            let vectors: Vec<FeatureVector> = jsonl::read_jsonl(&path_in(cfg, FEATURES_FILE))?;
            let registry = FeatureRegistry::by_version(&cfg.registry_version).map_err(|e| stage_err(e.to_string()))?;
            vectors
                .iter()
                .map(|fv| {
                    let list = serialize_features(fv, &registry, cfg.sig_digits)
                        .map_err(|e| stage_err(format!("{}: {e}", fv.segment_ref.subject_id)))?;
                    Ok(build_feature_prompt(&list).with_origin(fv.segment_ref.clone()))
                })
                .collect()
        }
        RunModality::Audio => {
            let entries: Vec<RecordingEntry> = jsonl::read_jsonl(&path_in(cfg, RECORDINGS_FILE))?;
            entries
                .iter()
                .map(|e| {
                    let p = build_audio_prompt(&e.audio_path)
                        .map_err(|err| stage_err(format!("{}/{}: {err}", e.dataset_id, e.subject_id)))?;
                    Ok(p.with_origin(SegmentRef {
                        dataset_id: e.dataset_id.clone(),
                        subject_id: e.subject_id.clone(),
                        segment_index: 0,
                    }))
                })
                .collect()
        }
    }
}

pub fn stage_infer(cfg: &RunConfig) -> Result<PathBuf, PipelineError> {
    ensure_out_dir(cfg)?;
    let payloads = build_payloads(cfg)?;
    let mut backend_cfg = cfg.backend.clone();
    if backend_cfg.kind == BackendKind::MockOracle && backend_cfg.oracle_answers.is_none() {
        backend_cfg.oracle_answers = Some(cfg.manifest_path.clone());
    }
    let backend = build_backend(&backend_cfg).map_err(|e| PipelineError::Backend {
        stage: Stage::Infer,
        at: "backend setup".into(),
        source: e,
    })?;
    let results = predict_batch(backend.as_ref(), &payloads, backend_cfg.max_in_flight);

    let mut predictions = Vec::with_capacity(results.len());
    let mut raw = Vec::new();
    for (payload, result) in payloads.iter().zip(results) {
        let origin = payload.origin.clone().expect("payloads carry their origin");
        match result {
            Ok(ex) => {
                if let Some(response) = ex.raw_response {
                    raw.push(RawLogEntry {
                        dataset_id: origin.dataset_id.clone(),
                        subject_id: origin.subject_id.clone(),
                        segment_index: origin.segment_index,
                        response,
                    });
                }
                predictions.push(SegmentPrediction {
                    segment_ref: origin,
                    prediction: Some(ex.prediction),
                    error: None,
                });
            }
            Err(e @ (BackendError::InvalidModelOutput(_) | BackendError::NonFiniteLogprob { .. })) => {
                log::warn!("{}/{} segment {}: {e}", origin.dataset_id, origin.subject_id, origin.segment_index);
                predictions.push(SegmentPrediction {
                    segment_ref: origin,
                    prediction: None,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => {
                return Err(PipelineError::Backend {
                    stage: Stage::Infer,
                    at: format!("{}/{} segment {}", origin.dataset_id, origin.subject_id, origin.segment_index),
                    source: e,
                })
            }
        }
    }
    let prompt_log: Vec<PromptLogEntry> = payloads
        .iter()
        .map(|p| PromptLogEntry::new(p, cfg.log_prompts))
        .collect();
    jsonl::write_jsonl(&path_in(cfg, PROMPTS_FILE), &prompt_log)?;
    if cfg.log_raw {
        jsonl::write_jsonl(&path_in(cfg, RAW_FILE), &raw)?;
    }
    let out = path_in(cfg, PREDICTIONS_FILE);
    jsonl::write_jsonl(&out, &predictions)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Undecided {
    pub reason: String,
}

pub fn stage_aggregate(cfg: &RunConfig) -> Result<PathBuf, PipelineError> {
    ensure_out_dir(cfg)?;
    let manifest = load_run_manifest(cfg)?;
    let predictions: Vec<SegmentPrediction> = jsonl::read_jsonl(&path_in(cfg, PREDICTIONS_FILE))?;
    let (decisions, errors) = aggregate_all(&predictions, &truth_map(&manifest));
    let undecided: Vec<Undecided> = errors
        .iter()
        .map(|e| {
            log::warn!("aggregation: {e}");
            Undecided { reason: e.to_string() }
        })
        .collect();
    jsonl::write_jsonl(&path_in(cfg, UNDECIDED_FILE), &undecided)?;
    if decisions.is_empty() {
        return Err(PipelineError::Evaluation("no subject could be decided".into()));
    }
    let out = path_in(cfg, DECISIONS_FILE);
    jsonl::write_jsonl(&out, &decisions)?;
    Ok(out)
}

fn model_label(cfg: &RunConfig) -> String {
    if cfg.backend.model_name.is_empty() {
        cfg.backend.kind.to_string()
    } else {
        cfg.backend.model_name.clone()
    }
}

pub fn stage_evaluate(cfg: &RunConfig) -> Result<PathBuf, PipelineError> {
    ensure_out_dir(cfg)?;
    let decisions: Vec<SubjectDecision> = jsonl::read_jsonl(&path_in(cfg, DECISIONS_FILE))?;
    let mut by_dataset: BTreeMap<&str, Vec<SubjectDecision>> = BTreeMap::new();
    for d in &decisions {
        by_dataset.entry(d.dataset_id.as_str()).or_default().push(d.clone());
    }
    let mut warnings = Vec::new();
    let undecided_path = path_in(cfg, UNDECIDED_FILE);
    if undecided_path.is_file() {
        let undecided: Vec<Undecided> = jsonl::read_jsonl(&undecided_path)?;
        warnings.extend(undecided.into_iter().map(|u| format!("undecided subject: {}", u.reason)));
    }
    let predictions_path = path_in(cfg, PREDICTIONS_FILE);
    if predictions_path.is_file() {
        let predictions: Vec<SegmentPrediction> = jsonl::read_jsonl(&predictions_path)?;
        let placeholders = predictions
            .iter()
            .filter(|p| p.prediction.as_ref().is_some_and(|m| m.placeholder_probability))
            .count();
        if placeholders > 0 {
            warnings.push(format!(
                "{placeholders} prediction(s) carry a placeholder probability; Brier scores include them"
            ));
        }
    }

    let mut reports = Vec::new();
    for (dataset, subjects) in by_dataset {
        match evaluate_all(&subjects, &cfg.bootstrap) {
            Ok(mut r) => {
                r.model = model_label(cfg);
                reports.push(r);
            }
            Err(e @ EvalError::SingleClassInput { .. }) => {
                log::warn!("{dataset}: not evaluated: {e}");
                warnings.push(format!("{dataset}: not evaluated: {e}"));
            }
            Err(e) => return Err(PipelineError::Evaluation(format!("{dataset}: {e}"))),
        }
    }
    if reports.is_empty() {
        return Err(PipelineError::Evaluation(format!(
            "no dataset could be evaluated ({})",
            warnings.join("; ")
        )));
    }
    let report = RunReport {
        model: model_label(cfg),
        backend_kind: cfg.backend.kind.to_string(),
        modality: cfg.modality.to_string(),
        reports,
        warnings,
    };
    let out = path_in(cfg, REPORT_FILE);
    jsonl::write_json(&out, &report)?;
    Ok(out)
}

/// Render `report.json` into markdown and csv files; return the text in
/// the configured format.
pub fn stage_report(cfg: &RunConfig) -> Result<String, PipelineError> {
    let report: RunReport = jsonl::read_json(&path_in(cfg, REPORT_FILE))?;
    jsonl::write_text(&path_in(cfg, REPORT_MD_FILE), &render_report(&report, ReportFormat::Markdown))?;
    jsonl::write_text(&path_in(cfg, REPORT_CSV_FILE), &render_report(&report, ReportFormat::Csv))?;
    Ok(render_report(&report, cfg.format))
}

fn count_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    if path.is_file() {
        jsonl::read_jsonl(path)
    } else {
        Ok(Vec::new())
    }
}

/// Audit counters recomputed from the persisted intermediates.
pub fn audit_counters(cfg: &RunConfig) -> Result<AuditCounters, PipelineError> {
    let exclusions: Vec<Exclusion> = count_lines(&path_in(cfg, EXCLUDED_FILE))?;
    let excluded_recordings: BTreeSet<(String, String)> = exclusions
        .iter()
        .filter(|e| e.segment_index.is_none())
        .map(|e| (e.dataset_id.clone(), e.subject_id.clone()))
        .collect();
    let features: Vec<FeatureVector> = if cfg.modality == RunModality::Features {
        count_lines(&path_in(cfg, FEATURES_FILE))?
    } else {
        Vec::new()
    };
    let predictions: Vec<SegmentPrediction> = count_lines(&path_in(cfg, PREDICTIONS_FILE))?;
    let undecided: Vec<Undecided> = count_lines(&path_in(cfg, UNDECIDED_FILE))?;
    Ok(AuditCounters {
        excluded_recordings: excluded_recordings.len(),
        excluded_segments: exclusions.iter().filter(|e| e.segment_index.is_some()).count(),
        imputed_values: features.iter().map(|f| f.imputed.len()).sum(),
        backend_calls: predictions.len(),
        invalid_outputs: predictions.iter().filter(|p| p.prediction.is_none()).count(),
        placeholder_probabilities: predictions
            .iter()
            .filter(|p| p.prediction.as_ref().is_some_and(|m| m.placeholder_probability))
            .count(),
        undecided_subjects: undecided.len(),
    })
}

/// Run one stage.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<Option<String>, PipelineError> {
    match stage {
        Stage::Validate => stage_validate(cfg).map(|_| None),
        Stage::Extract => stage_extract(cfg).map(|_| None),
        Stage::Infer => stage_infer(cfg).map(|_| None),
        Stage::Aggregate => stage_aggregate(cfg).map(|_| None),
        Stage::Evaluate => stage_evaluate(cfg).map(|_| None),
        Stage::Report => stage_report(cfg).map(Some),
    }
}

/// All stages in order. With `resume`, a stage whose output file exists is
/// skipped. Returns the run record and the rendered report.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(RunRecord, String), PipelineError> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let mut stages = Vec::new();
    let mut rendered = String::new();
    for stage in Stage::ALL {
        let artifact = path_in(cfg, stage.output(cfg.modality));
        let skip = cfg.resume && artifact.is_file() && stage != Stage::Report;
        let t0 = Instant::now();
        if skip {
            log::info!("{stage}: {} exists, skipping", artifact.display());
        } else if let Some(text) = run_stage(cfg, stage)? {
            rendered = text;
        }
        stages.push(StageRecord {
            stage,
            artifact,
            skipped: skip,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let record = RunRecord {
        config: cfg.clone(),
        stages,
        counters: audit_counters(cfg)?,
    };
    jsonl::write_json(&path_in(cfg, RUN_RECORD_FILE), &record)?;
    Ok((record, rendered))
}
