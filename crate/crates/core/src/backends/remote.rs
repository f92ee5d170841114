//! Chat-completion client over HTTP.

use std::thread;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use crate::corpus::Label;
use crate::prompting::{Modality, PromptPayload};

use super::decision::{decide_from_logprobs, parse_generated_label};
use super::{Backend, BackendConfig, BackendError, Exchange, ModelPrediction, PredictionSource};

pub const TOP_LOGPROBS: u32 = 5;
pub const MAX_TOKENS: u32 = 4;
pub const PLACEHOLDER_PROBABILITY: f64 = 0.75;

/// The fields of a chat-completion response that matter here.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub content: String,
    /// `(token, logprob)` alternatives for the first generated token.
    pub top_logprobs: Vec<(String, f64)>,
}

impl ParsedResponse {
    /// Highest log-probability among the spellings of a label token.
    pub fn candidate_logprob(&self, label: Label) -> Option<f64> {
        let (bare, spaced) = match label {
            Label::Control => ("0", " 0"),
            Label::Parkinson => ("1", " 1"),
        };
        self.top_logprobs
            .iter()
            .filter(|(t, _)| t == bare || t == spaced)
            .map(|&(_, lp)| lp)
            .reduce(f64::max)
    }
}

pub fn build_request_body(payload: &PromptPayload, cfg: &BackendConfig) -> Result<Value, BackendError> {
    let content = match payload.modality {
        Modality::FeatureText => Value::String(payload.user_text.clone()),
        Modality::Audio => {
            let path = payload
                .audio_ref
                .as_ref()
                .ok_or_else(|| BackendError::InvalidConfig("audio prompt without audio_ref".into()))?;
            let bytes = std::fs::read(path).map_err(|e| BackendError::Io {
                path: path.clone(),
                source: e,
            })?;
            json!([
                {"type": "text", "text": payload.user_text},
                {"type": "input_audio", "input_audio": {
                    "data": base64::engine::general_purpose::STANDARD.encode(bytes),
                    "format": "wav",
                }},
            ])
        }
    };
    let mut messages = Vec::new();
    if !payload.system_text.is_empty() {
        messages.push(json!({"role": "system", "content": payload.system_text}));
    }
    messages.push(json!({"role": "user", "content": content}));
    let mut body = json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "seed": cfg.seed,
        "max_tokens": MAX_TOKENS,
        "messages": messages,
    });
    if cfg.request_logprobs {
        body["logprobs"] = json!(true);
        body["top_logprobs"] = json!(TOP_LOGPROBS);
    }
    Ok(body)
}

/// Pull the first choice's content and first-token alternatives out of a
/// response body.
pub fn parse_response(body: &str) -> Result<ParsedResponse, BackendError> {
    let bad = |m: &str| BackendError::InvalidModelOutput(format!("{m}: {}", truncate(body, 200)));
    let v: Value = serde_json::from_str(body).map_err(|_| bad("response is not JSON"))?;
    let choice = v.get("choices").and_then(|c| c.get(0)).ok_or_else(|| bad("no choices"))?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| bad("no message content"))?
        .to_string();
    let mut top_logprobs = Vec::new();
    let first = choice
        .get("logprobs")
        .and_then(|l| l.get("content"))
        .and_then(|c| c.get(0));
    if let Some(first) = first {
        if let (Some(t), Some(lp)) = (
            first.get("token").and_then(Value::as_str),
            first.get("logprob").and_then(Value::as_f64),
        ) {
            top_logprobs.push((t.to_string(), lp));
        }
        for alt in first.get("top_logprobs").and_then(Value::as_array).into_iter().flatten() {
            if let (Some(t), Some(lp)) = (
                alt.get("token").and_then(Value::as_str),
                alt.get("logprob").and_then(Value::as_f64),
            ) {
                top_logprobs.push((t.to_string(), lp));
            }
        }
    }
    Ok(ParsedResponse { content, top_logprobs })
}

/// Prediction from a parsed response.
///
/// Both candidates scored: two-way softmax. Otherwise the label comes from
/// the text, with the chosen token's probability when it was reported, else
/// a flagged placeholder.
pub fn prediction_from_response(resp: &ParsedResponse) -> Result<ModelPrediction, BackendError> {
    let lp0 = resp.candidate_logprob(Label::Control);
    let lp1 = resp.candidate_logprob(Label::Parkinson);
    if let (Some(a), Some(b)) = (lp0, lp1) {
        let (label, probability) = decide_from_logprobs(a, b)?;
        return Ok(ModelPrediction {
            label,
            probability,
            raw_output: resp.content.clone(),
            logprob_0: lp0,
            logprob_1: lp1,
            source: PredictionSource::Logprobs,
            placeholder_probability: false,
        });
    }
    let label = parse_generated_label(&resp.content)?;
    let reported = match label {
        Label::Control => lp0,
        Label::Parkinson => lp1,
    }
    .filter(|lp| lp.is_finite());
    let (probability, placeholder) = match reported {
        Some(lp) => (lp.exp().clamp(0.0, 1.0), false),
        None => {
            log::warn!(
                "no probability reported for output {:?}; using placeholder {PLACEHOLDER_PROBABILITY}",
                truncate(&resp.content, 40)
            );
            (PLACEHOLDER_PROBABILITY, true)
        }
    };
    Ok(ModelPrediction {
        label,
        probability,
        raw_output: resp.content.clone(),
        logprob_0: lp0,
        logprob_1: lp1,
        source: PredictionSource::GeneratedText,
        placeholder_probability: placeholder,
    })
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub struct RemoteBackend {
    cfg: BackendConfig,
    endpoint: String,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<RemoteBackend, BackendError> {
        let endpoint = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| BackendError::InvalidConfig(format!("{} backend needs an endpoint", cfg.kind)))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        let api_key = cfg
            .api_key_env
            .as_deref()
            .filter(|name| !name.is_empty())
            .and_then(|name| std::env::var(name).ok());
        Ok(RemoteBackend {
            cfg: cfg.clone(),
            endpoint,
            client,
            api_key,
        })
    }

    fn post_once(&self, body: &Value) -> Result<Result<String, BackendError>, reqwest::Error> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send()?;
        let status = resp.status();
        let text = resp.text()?;
        if !status.is_success() {
            return Ok(Err(BackendError::BackendRefused {
                status: status.as_u16(),
                body: truncate(&text, 500).to_string(),
            }));
        }
        Ok(Ok(text))
    }

    /// POST with exponential backoff on transport failures only.
    fn post(&self, body: &Value) -> Result<String, BackendError> {
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.cfg.retry_base_s * 2f64.powi(attempt as i32 - 1);
                thread::sleep(Duration::from_secs_f64(wait));
            }
            match self.post_once(body) {
                Ok(result) => return result,
                Err(e) => {
                    log::warn!("attempt {}/{attempts} to {} failed: {e}", attempt + 1, self.endpoint);
                    last = e.to_string();
                }
            }
        }
        Err(BackendError::TransportError {
            attempts,
            message: last,
        })
    }
}

impl Backend for RemoteBackend {
    fn call(&self, payload: &PromptPayload) -> Result<Exchange, BackendError> {
        let body = build_request_body(payload, &self.cfg)?;
        let raw = self.post(&body)?;
        let parsed = parse_response(&raw)?;
        Ok(Exchange {
            prediction: prediction_from_response(&parsed)?,
            raw_response: Some(raw),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::BackendKind;
    use crate::prompting::build_feature_prompt;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn cfg(endpoint: String) -> BackendConfig {
        BackendConfig {
            kind: BackendKind::RemoteChat,
            endpoint_url: Some(endpoint),
            model_name: "m".into(),
            timeout_s: 0.5,
            retry_base_s: 0.01,
            ..BackendConfig::default()
        }
    }

    /// Serve `responses` in order, one per connection, recording request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut s = stream;
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn response_with_logprobs(content: &str, alts: &[(&str, f64)]) -> String {
        let top: Vec<Value> = alts.iter().map(|(t, lp)| json!({"token": t, "logprob": lp})).collect();
        json!({"choices": [{"message": {"role": "assistant", "content": content},
            "logprobs": {"content": [{"token": alts[0].0, "logprob": alts[0].1, "top_logprobs": top}]}}]})
        .to_string()
    }

    #[test]
    fn request_body_shape() {
        let body = build_request_body(&build_feature_prompt("a: 1"), &cfg("http://x".into())).unwrap();
        assert_eq!(body["model"], "m");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["seed"], 0);
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 5);
        assert_eq!(body["max_tokens"], 4);
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert!(body["messages"][0]["content"].as_str().unwrap().ends_with("a: 1\nOutput:"));
    }

    #[test]
    fn audio_request_embeds_base64_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.wav");
        std::fs::write(&path, b"RIFF").unwrap();
        let p = crate::prompting::build_audio_prompt(&path).unwrap();
        let body = build_request_body(&p, &cfg("http://x".into())).unwrap();
        let parts = body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(parts[0]["type"], "text");
        assert_eq!(parts[1]["input_audio"]["format"], "wav");
        assert_eq!(parts[1]["input_audio"]["data"], "UklGRg==");
    }

    #[test]
    fn both_candidates_use_softmax() {
        let r = parse_response(&response_with_logprobs("1", &[("1", -0.1), (" 1", -0.5), ("0", -2.4)])).unwrap();
        let p = prediction_from_response(&r).unwrap();
        assert_eq!(p.source, PredictionSource::Logprobs);
        assert_eq!(p.label, Label::Parkinson);
        assert!((p.probability - 0.908_877).abs() < 1e-6);
        assert_eq!(p.logprob_1, Some(-0.1));
    }

    #[test]
    fn one_candidate_uses_its_probability() {
        let r = parse_response(&response_with_logprobs("0", &[("0", -0.2), ("Healthy", -3.0)])).unwrap();
        let p = prediction_from_response(&r).unwrap();
        assert_eq!(p.source, PredictionSource::GeneratedText);
        assert_eq!(p.label, Label::Control);
        assert!((p.probability - (-0.2f64).exp()).abs() < 1e-15);
        assert!(!p.placeholder_probability);
    }

    #[test]
    fn no_logprobs_gives_flagged_placeholder() {
        let body = json!({"choices": [{"message": {"content": "The answer is 1"}}]}).to_string();
        let p = prediction_from_response(&parse_response(&body).unwrap()).unwrap();
        assert_eq!(p.label, Label::Parkinson);
        assert_eq!(p.probability, PLACEHOLDER_PROBABILITY);
        assert!(p.placeholder_probability);
    }

    #[test]
    fn malformed_responses() {
        assert!(parse_response("nope").is_err());
        assert!(parse_response("{}").is_err());
        assert!(parse_response(r#"{"choices":[{"message":{}}]}"#).is_err());
        let unparseable = json!({"choices": [{"message": {"content": "10"}}]}).to_string();
        assert!(matches!(
            prediction_from_response(&parse_response(&unparseable).unwrap()),
            Err(BackendError::InvalidModelOutput(_))
        ));
    }

    #[test]
    fn round_trip_over_http() {
        let (url, server) = serve(vec![(200, response_with_logprobs("0", &[("0", -0.01), ("1", -6.0)]))]);
        let backend = RemoteBackend::new(&cfg(url)).unwrap();
        let ex = backend.call(&build_feature_prompt("a: 1")).unwrap();
        assert_eq!(ex.prediction.label, Label::Control);
        assert!(ex.raw_response.unwrap().contains("choices"));
        let bodies = server.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn non_2xx_is_refused_without_retry() {
        let (url, server) = serve(vec![(429, "{\"error\":\"slow down\"}".into())]);
        let backend = RemoteBackend::new(&cfg(url)).unwrap();
        match backend.call(&build_feature_prompt("a: 1")) {
            Err(BackendError::BackendRefused { status, .. }) => assert_eq!(status, 429),
            other => panic!("{other:?}"),
        }
        assert_eq!(server.join().unwrap().len(), 1);
    }

    #[test]
    fn timeouts_exhaust_retries() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let accepted = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&accepted);
        thread::spawn(move || {
            let mut held = Vec::new();
            for s in listener.incoming() {
                counter.fetch_add(1, Ordering::SeqCst);
                held.push(s);
            }
        });
        let c = BackendConfig {
            timeout_s: 0.1,
            ..cfg(url)
        };
        let backend = RemoteBackend::new(&c).unwrap();
        match backend.call(&build_feature_prompt("a: 1")) {
            Err(BackendError::TransportError { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(accepted.load(Ordering::SeqCst), 4);
    }
}
