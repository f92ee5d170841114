//! Run configuration and its flat `section.key = value` file format.
//!
//! ```text
//! # comment
//! run.manifest = data/manifest.csv
//! backend.kind = mock_oracle
//! bootstrap.replicates = 10000
//! ```
//!
//! Values may be wrapped in double quotes. Unknown and repeated keys are
//! errors.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendConfig, BackendKind};
use crate::corpus::Label;
use crate::evaluation::EvalSettings;
use crate::features::CANONICAL_VERSION;
use crate::preprocess::PreprocessConfig;
use crate::prompting::DEFAULT_SIG_DIGITS;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("{key}: {message}")]
    BadValue { key: String, message: String },
    #[error("line {line}: key {key:?} set twice")]
    DuplicateKey { line: usize, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunModality {
    Features,
    Audio,
}

impl FromStr for RunModality {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "features" => Ok(RunModality::Features),
            "audio" => Ok(RunModality::Audio),
            _ => Err(format!("expected features or audio, got {s:?}")),
        }
    }
}

impl fmt::Display for RunModality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunModality::Features => "features",
            RunModality::Audio => "audio",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("expected markdown, csv or json, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
    pub modality: RunModality,
    pub preprocess: PreprocessConfig,
    pub registry_version: String,
    pub sig_digits: usize,
    pub backend: BackendConfig,
    pub bootstrap: EvalSettings,
    pub strict_validation: bool,
    pub resume: bool,
    pub log_prompts: bool,
    pub log_raw: bool,
    pub format: ReportFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest_path: PathBuf::from("manifest.csv"),
            output_dir: PathBuf::from("out"),
            modality: RunModality::Features,
            preprocess: PreprocessConfig::default(),
            registry_version: CANONICAL_VERSION.into(),
            sig_digits: DEFAULT_SIG_DIGITS,
            backend: BackendConfig::default(),
            bootstrap: EvalSettings::default(),
            strict_validation: false,
            resume: false,
            log_prompts: false,
            log_raw: false,
            format: ReportFormat::Markdown,
        }
    }
}

/// Every settable key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("run.manifest", "path to the manifest CSV"),
    ("run.out", "output directory for intermediates and reports"),
    ("run.modality", "features | audio"),
    ("run.strict", "fail on any validation finding (bool)"),
    ("run.resume", "skip stages whose output already exists (bool)"),
    ("run.log_prompts", "include full prompt text in prompts.jsonl (bool)"),
    ("run.log_raw", "write raw backend responses to raw.jsonl (bool)"),
    ("run.format", "markdown | csv | json"),
    ("preprocess.target_rate_hz", "resampling target in Hz"),
    ("preprocess.segment_seconds", "segment length in seconds"),
    ("preprocess.denoise", "spectral gating on or off (bool)"),
    ("preprocess.reduction_db", "attenuation of gated bins in dB"),
    ("preprocess.noise_percentile", "fraction of quietest frames forming the noise profile"),
    ("features.registry_version", "feature registry version"),
    ("features.sig_digits", "significant digits in serialized values"),
    ("backend.kind", "remote_chat | remote_audio | mock_threshold | mock_fixed | mock_oracle"),
    ("backend.endpoint", "chat-completion URL for remote kinds"),
    ("backend.model", "model name sent in requests"),
    ("backend.temperature", "sampling temperature; must be 0"),
    ("backend.seed", "seed sent in requests"),
    ("backend.request_logprobs", "ask for token log-probabilities (bool)"),
    ("backend.timeout_s", "per-request timeout in seconds"),
    ("backend.max_retries", "retries after transport failures"),
    ("backend.retry_base_s", "first backoff delay in seconds, doubled per retry"),
    ("backend.max_in_flight", "concurrent requests"),
    ("backend.api_key_env", "environment variable holding a bearer token"),
    ("backend.mock_label", "label returned by mock_fixed (0 or 1)"),
    ("backend.mock_probability", "probability attached by mock backends"),
    ("backend.mock_feature", "feature name read by mock_threshold"),
    ("backend.mock_threshold", "mock_threshold predicts 1 above this value"),
    ("backend.oracle_answers", "manifest-format CSV answered by mock_oracle; defaults to run.manifest"),
    ("backend.oracle_invert", "mock_oracle answers the opposite label (bool)"),
    ("bootstrap.replicates", "bootstrap replicates"),
    ("bootstrap.level", "confidence level"),
    ("bootstrap.seed", "master seed for resampling"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        message: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            message: format!("expected a boolean, got {value:?}"),
        }),
    }
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl RunConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let b = &mut self.backend;
        match key {
            "run.manifest" => self.manifest_path = PathBuf::from(v),
            "run.out" => self.output_dir = PathBuf::from(v),
            "run.modality" => self.modality = parse(key, v)?,
            "run.strict" => self.strict_validation = parse_bool(key, v)?,
            "run.resume" => self.resume = parse_bool(key, v)?,
            "run.log_prompts" => self.log_prompts = parse_bool(key, v)?,
            "run.log_raw" => self.log_raw = parse_bool(key, v)?,
            "run.format" => self.format = parse(key, v)?,
            "preprocess.target_rate_hz" => self.preprocess.target_rate_hz = parse(key, v)?,
            "preprocess.segment_seconds" => self.preprocess.segment_seconds = parse(key, v)?,
            "preprocess.denoise" => self.preprocess.denoise_enabled = parse_bool(key, v)?,
            "preprocess.reduction_db" => self.preprocess.denoise_reduction_db = parse(key, v)?,
            "preprocess.noise_percentile" => self.preprocess.noise_percentile = parse(key, v)?,
            "features.registry_version" => self.registry_version = v.to_string(),
            "features.sig_digits" => self.sig_digits = parse(key, v)?,
            "backend.kind" => b.kind = parse(key, v)?,
            "backend.endpoint" => b.endpoint_url = optional(v),
            "backend.model" => b.model_name = v.to_string(),
            "backend.temperature" => b.temperature = parse(key, v)?,
            "backend.seed" => b.seed = parse(key, v)?,
            "backend.request_logprobs" => b.request_logprobs = parse_bool(key, v)?,
            "backend.timeout_s" => b.timeout_s = parse(key, v)?,
            "backend.max_retries" => b.max_retries = parse(key, v)?,
            "backend.retry_base_s" => b.retry_base_s = parse(key, v)?,
            "backend.max_in_flight" => b.max_in_flight = parse(key, v)?,
            "backend.api_key_env" => b.api_key_env = optional(v),
            "backend.mock_label" => {
                let d: u8 = parse(key, v)?;
                b.mock_label = Label::from_digit(d).ok_or_else(|| ConfigError::BadValue {
                    key: key.into(),
                    message: format!("expected 0 or 1, got {d}"),
                })?
            }
            "backend.mock_probability" => b.mock_probability = parse(key, v)?,
            "backend.mock_feature" => b.mock_feature = v.to_string(),
            "backend.mock_threshold" => b.mock_threshold = parse(key, v)?,
            "backend.oracle_answers" => b.oracle_answers = optional(v).map(PathBuf::from),
            "backend.oracle_invert" => b.oracle_invert = parse_bool(key, v)?,
            "bootstrap.replicates" => self.bootstrap.replicates = parse(key, v)?,
            "bootstrap.level" => self.bootstrap.level = parse(key, v)?,
            "bootstrap.seed" => self.bootstrap.seed = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply every `key = value` line of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (key, value, _) in parse_config_text(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.backend
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.validate_except_backend()
    }

    /// Checks for the stages that never talk to a backend.
    pub fn validate_except_backend(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        self.preprocess.validate().map_err(|e| invalid(&e))?;
        self.bootstrap.validate().map_err(|e| invalid(&e))?;
        if self.sig_digits == 0 || self.sig_digits > 17 {
            return Err(ConfigError::Invalid("features.sig_digits must lie in 1..=17".into()));
        }
        if self.modality == RunModality::Audio && self.backend.kind == BackendKind::MockThreshold {
            return Err(ConfigError::Invalid("mock_threshold reads features; use run.modality = features".into()));
        }
        Ok(())
    }
}

/// Split config text into `(key, value, line)` triples.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() || !key.contains('.') || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("bad key {key:?}"),
            });
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if out.iter().any(|(k, _, _)| k == key) {
            return Err(ConfigError::DuplicateKey {
                line: line_no,
                key: key.to_string(),
            });
        }
        out.push((key.to_string(), value.to_string(), line_no));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_constants() {
        let c = RunConfig::default();
        assert_eq!(c.preprocess.target_rate_hz, 16_000);
        assert_eq!(c.preprocess.segment_seconds, 10.0);
        assert_eq!(c.backend.temperature, 0.0);
        assert_eq!(c.backend.seed, 0);
        assert_eq!(c.bootstrap.replicates, 10_000);
        assert_eq!(c.bootstrap.level, 0.95);
        assert_eq!(c.bootstrap.seed, 0);
    }

    #[test]
    fn every_key_is_settable() {
        let sample = |k: &str| match k {
            "run.modality" => "audio",
            "run.format" => "csv",
            "backend.kind" => "mock_fixed",
            "backend.mock_label" => "0",
            k if k.starts_with("run.") && k != "run.manifest" && k != "run.out" => "true",
            "preprocess.denoise" | "backend.request_logprobs" => "false",
            "backend.oracle_invert" => "true",
            "backend.endpoint" | "backend.model" | "backend.api_key_env" | "backend.mock_feature"
            | "backend.oracle_answers" | "features.registry_version" | "run.manifest" | "run.out" => "x",
            "bootstrap.level" | "backend.mock_probability" | "preprocess.noise_percentile" => "0.5",
            _ => "7",
        };
        for (k, _) in KEYS {
            let mut c = RunConfig::default();
            c.set(k, sample(k)).unwrap_or_else(|e| panic!("{k}: {e}"));
            assert_ne!(c, RunConfig::default(), "{k} had no effect");
        }
    }

    #[test]
    fn file_text() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# a run\n\nrun.manifest = \"data/m.csv\"\nbackend.kind = mock_oracle\nbootstrap.replicates=200\n",
        )
        .unwrap();
        assert_eq!(c.manifest_path, PathBuf::from("data/m.csv"));
        assert_eq!(c.backend.kind, BackendKind::MockOracle);
        assert_eq!(c.bootstrap.replicates, 200);
    }

    #[test]
    fn file_errors() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("nonsense"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(c.apply_text("a.b = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(
            c.apply_text("run.strict = 1\nrun.strict = 0"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
        assert!(matches!(c.apply_text("run.strict = maybe"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(c.apply_text("bootstrap.replicates = -3"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn nonzero_temperature_invalid() {
        let mut c = RunConfig::default();
        c.set("backend.kind", "mock_fixed").unwrap();
        assert!(c.validate().is_ok());
        c.set("backend.temperature", "0.2").unwrap();
        assert!(c.validate().is_err());
    }
}
