//! Model backends: a chat-completion HTTP client and local mocks.

mod decision;
mod mock;
pub mod remote;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_manifest, Label};
use crate::prompting::PromptPayload;

pub use decision::{decide_from_logprobs, parse_generated_label};
pub use mock::{FixedBackend, OracleBackend, ThresholdBackend};
pub use remote::{build_request_body, parse_response, prediction_from_response, ParsedResponse, RemoteBackend};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempts: {message}")]
    TransportError { attempts: u32, message: String },
    #[error("backend refused the request with HTTP {status}: {body}")]
    BackendRefused { status: u16, body: String },
    #[error("could not read a 0/1 label from model output {0:?}")]
    InvalidModelOutput(String),
    #[error("non-finite log-probabilities ({logprob_0}, {logprob_1})")]
    NonFiniteLogprob { logprob_0: f64, logprob_1: f64 },
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteChat,
    RemoteAudio,
    MockThreshold,
    MockFixed,
    MockOracle,
}

impl BackendKind {
    pub const ALL: [BackendKind; 5] = [
        BackendKind::RemoteChat,
        BackendKind::RemoteAudio,
        BackendKind::MockThreshold,
        BackendKind::MockFixed,
        BackendKind::MockOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::RemoteChat => "remote_chat",
            BackendKind::RemoteAudio => "remote_audio",
            BackendKind::MockThreshold => "mock_threshold",
            BackendKind::MockFixed => "mock_fixed",
            BackendKind::MockOracle => "mock_oracle",
        }
    }

    pub fn is_remote(self) -> bool {
        matches!(self, BackendKind::RemoteChat | BackendKind::RemoteAudio)
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown backend kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub seed: u64,
    pub request_logprobs: bool,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; each later retry doubles it.
    pub retry_base_s: f64,
    pub max_in_flight: usize,
    /// Environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
    pub mock_label: Label,
    pub mock_probability: f64,
    pub mock_feature: String,
    pub mock_threshold: f64,
    /// Manifest-format CSV whose labels the oracle answers with.
    pub oracle_answers: Option<PathBuf>,
    pub oracle_invert: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::RemoteChat,
            endpoint_url: None,
            model_name: String::new(),
            temperature: 0.0,
            seed: 0,
            request_logprobs: true,
            timeout_s: 60.0,
            max_retries: 3,
            retry_base_s: 0.5,
            max_in_flight: 4,
            api_key_env: None,
            mock_label: Label::Parkinson,
            mock_probability: 1.0,
            mock_feature: "jitter_local".into(),
            mock_threshold: 0.01,
            oracle_answers: None,
            oracle_invert: false,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::InvalidConfig(m));
        if self.temperature != 0.0 {
            return bad(format!("temperature must be 0, got {}", self.temperature));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad("timeout_s must be positive".into());
        }
        if !(self.retry_base_s >= 0.0 && self.retry_base_s.is_finite()) {
            return bad("retry_base_s must be non-negative".into());
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mock_probability) {
            return bad("mock_probability must lie in [0, 1]".into());
        }
        if self.kind.is_remote() && self.endpoint_url.as_deref().unwrap_or("").is_empty() {
            return bad(format!("{} backend needs an endpoint", self.kind));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Logprobs,
    GeneratedText,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPrediction {
    pub label: Label,
    /// Probability of `label`.
    pub probability: f64,
    pub raw_output: String,
    pub logprob_0: Option<f64>,
    pub logprob_1: Option<f64>,
    pub source: PredictionSource,
    /// Set when the backend reported no probability and a fixed value was used.
    #[serde(default)]
    pub placeholder_probability: bool,
}

/// A prediction plus the untouched response body, when there was one.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub prediction: ModelPrediction,
    pub raw_response: Option<String>,
}

pub trait Backend: Send + Sync {
    fn call(&self, payload: &PromptPayload) -> Result<Exchange, BackendError>;

    fn predict(&self, payload: &PromptPayload) -> Result<ModelPrediction, BackendError> {
        self.call(payload).map(|e| e.prediction)
    }
}

pub fn build_backend(cfg: &BackendConfig) -> Result<Box<dyn Backend>, BackendError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::RemoteChat | BackendKind::RemoteAudio => Box::new(RemoteBackend::new(cfg)?),
        BackendKind::MockFixed => Box::new(FixedBackend {
            label: cfg.mock_label,
            probability: cfg.mock_probability,
        }),
        BackendKind::MockThreshold => Box::new(ThresholdBackend {
            feature: cfg.mock_feature.clone(),
            threshold: cfg.mock_threshold,
            probability: cfg.mock_probability,
        }),
        BackendKind::MockOracle => {
            let path = cfg
                .oracle_answers
                .as_ref()
                .ok_or_else(|| BackendError::InvalidConfig("mock_oracle needs an answer file".into()))?;
            let manifest =
                load_manifest(path).map_err(|e| BackendError::InvalidConfig(format!("answer file: {e}")))?;
            Box::new(OracleBackend {
                answers: manifest
                    .recordings
                    .iter()
                    .map(|r| (r.recording_ref(), r.label))
                    .collect(),
                invert: cfg.oracle_invert,
                probability: cfg.mock_probability,
            })
        }
    })
}

/// Call the backend on every payload with at most `max_in_flight`
/// requests outstanding. Results come back in input order.
pub fn predict_batch(
    backend: &dyn Backend,
    payloads: &[PromptPayload],
    max_in_flight: usize,
) -> Vec<Result<Exchange, BackendError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| payloads.par_iter().map(|p| backend.call(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::build_feature_prompt;

    #[test]
    fn kind_names_round_trip() {
        for k in BackendKind::ALL {
            assert_eq!(k.name().parse::<BackendKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("gpt".parse::<BackendKind>().is_err());
    }

    #[test]
    fn config_rules() {
        let mut c = BackendConfig {
            kind: BackendKind::MockFixed,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.temperature = 0.7;
        assert!(c.validate().is_err());
        let remote = BackendConfig::default();
        assert!(remote.validate().is_err());
        assert_eq!(remote.max_retries, 3);
        assert_eq!(remote.retry_base_s, 0.5);
    }

    #[test]
    fn batch_preserves_order() {
        let b = ThresholdBackend {
            feature: "x".into(),
            threshold: 50.0,
            probability: 0.6,
        };
        let payloads: Vec<_> = (0..100).map(|i| build_feature_prompt(&format!("x: {i}"))).collect();
        let out = predict_batch(&b, &payloads, 8);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap().prediction.label.is_positive(), i > 50);
        }
    }

    #[test]
    fn prediction_json_uses_digits() {
        let p = FixedBackend {
            label: Label::Control,
            probability: 0.7,
        }
        .predict(&build_feature_prompt("a: 1"))
        .unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"label\":0"), "{s}");
        assert!(s.contains("\"source\":\"oracle\""));
        let back: ModelPrediction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
