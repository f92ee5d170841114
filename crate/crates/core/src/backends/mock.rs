//! Local deterministic backends for tests and dry runs.

use std::collections::HashMap;

use crate::corpus::{Label, RecordingRef};
use crate::prompting::{parse_serialized, PromptPayload};

use super::{Backend, BackendError, Exchange, ModelPrediction, PredictionSource};

fn oracle_prediction(label: Label, probability: f64) -> Exchange {
    Exchange {
        prediction: ModelPrediction {
            label,
            probability,
            raw_output: label.to_string(),
            logprob_0: None,
            logprob_1: None,
            source: PredictionSource::Oracle,
            placeholder_probability: false,
        },
        raw_response: None,
    }
}

/// Same answer for every prompt.
pub struct FixedBackend {
    pub label: Label,
    pub probability: f64,
}

impl Backend for FixedBackend {
    fn call(&self, _payload: &PromptPayload) -> Result<Exchange, BackendError> {
        Ok(oracle_prediction(self.label, self.probability))
    }
}

/// Label 1 when one named feature in the prompt exceeds a threshold.
pub struct ThresholdBackend {
    pub feature: String,
    pub threshold: f64,
    pub probability: f64,
}

impl Backend for ThresholdBackend {
    fn call(&self, payload: &PromptPayload) -> Result<Exchange, BackendError> {
        let list = payload
            .feature_list()
            .ok_or_else(|| BackendError::InvalidConfig("mock_threshold needs feature prompts".into()))?;
        let pairs = parse_serialized(list).map_err(|e| BackendError::InvalidModelOutput(e.to_string()))?;
        let value = pairs
            .iter()
            .find(|(name, _)| *name == self.feature)
            .map(|&(_, v)| v)
            .ok_or_else(|| BackendError::InvalidConfig(format!("feature {:?} not in prompt", self.feature)))?;
        let label = if value > self.threshold {
            Label::Parkinson
        } else {
            Label::Control
        };
        Ok(oracle_prediction(label, self.probability))
    }
}

/// Answers from an answer key indexed by recording, optionally inverted.
pub struct OracleBackend {
    pub answers: HashMap<RecordingRef, Label>,
    pub invert: bool,
    pub probability: f64,
}

impl Backend for OracleBackend {
    fn call(&self, payload: &PromptPayload) -> Result<Exchange, BackendError> {
        let origin = payload
            .origin
            .as_ref()
            .ok_or_else(|| BackendError::InvalidConfig("mock_oracle needs prompts tagged with their origin".into()))?;
        let key = RecordingRef {
            dataset_id: origin.dataset_id.clone(),
            subject_id: origin.subject_id.clone(),
        };
        let truth = *self
            .answers
            .get(&key)
            .ok_or_else(|| BackendError::InvalidConfig(format!("no answer for {key}")))?;
        let label = if self.invert { truth.flipped() } else { truth };
        Ok(oracle_prediction(label, self.probability))
    }
}
