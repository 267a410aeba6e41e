//! HTTP clients for remote text generation and embeddings: chat-completion
//! style requests with bounded retries, exponential backoff, and a global
//! in-flight limit. Auth tokens come from the environment only, never from
//! config files.
//!
//! Environment variables: `DUET_LLM_BASE_URL`, `DUET_LLM_API_KEY`,
//! `DUET_EMBED_BASE_URL`, `DUET_EMBED_API_KEY`.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use duet_core::corpus::{HistoryPair, RatingScale};
use duet_core::embed::{EmbedError, Embedder};
use duet_core::pipeline::{
    parse_single_pass_output, ActionTrace, Policy, PolicyError, Profile, ProfileBundle,
};
use duet_core::recommender::{parse_first_number, EnvError, Environment, Prediction};
use duet_core::template::{TemplateError, TemplateRole};
use sha2::{Digest, Sha256};

use crate::registry::{PromptRegistry, RegistryError};

pub const LLM_BASE_URL_VAR: &str = "DUET_LLM_BASE_URL";
pub const LLM_API_KEY_VAR: &str = "DUET_LLM_API_KEY";
pub const EMBED_BASE_URL_VAR: &str = "DUET_EMBED_BASE_URL";
pub const EMBED_API_KEY_VAR: &str = "DUET_EMBED_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("config: {0}")]
    Config(String),
}

/// Counting semaphore: the process-global in-flight request limit.
struct Gate {
    available: Mutex<usize>,
    cv: Condvar,
}

struct GatePermit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Gate {
            available: Mutex::new(limit.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut available = self.available.lock().expect("gate poisoned");
        while *available == 0 {
            available = self.cv.wait(available).expect("gate poisoned");
        }
        *available -= 1;
        GatePermit(self)
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut available = self.0.available.lock().expect("gate poisoned");
        *available += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_retries: usize,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub timeout_ms: u64,
    pub concurrency: usize,
}

impl GatewayConfig {
    /// Base URL and key from the environment; everything else from the
    /// caller's run configuration.
    pub fn from_env(model: impl Into<String>) -> Result<Self, GatewayError> {
        let base_url = std::env::var(LLM_BASE_URL_VAR)
            .map_err(|_| GatewayError::MissingEnv(LLM_BASE_URL_VAR.into()))?;
        Ok(GatewayConfig {
            base_url,
            api_key: std::env::var(LLM_API_KEY_VAR).ok(),
            model: model.into(),
            max_retries: 3,
            backoff_base_ms: 250,
            backoff_cap_ms: 4_000,
            timeout_ms: 30_000,
            concurrency: 4,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub template_id: String,
    pub vars: BTreeMap<String, String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

pub struct LlmClient {
    config: GatewayConfig,
    http: reqwest::blocking::Client,
    gate: Gate,
    last_retry_delays: Mutex<Vec<u64>>,
}

impl LlmClient {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(LlmClient {
            gate: Gate::new(config.concurrency),
            http,
            last_retry_delays: Mutex::new(Vec::new()),
            config,
        })
    }

    /// Backoff delays (ms) slept during the most recent `generate` call.
    pub fn last_retry_delays(&self) -> Vec<u64> {
        self.last_retry_delays.lock().expect("poisoned").clone()
    }

    fn backoff_ms(&self, attempt: usize) -> u64 {
        let exp = self.config.backoff_base_ms.saturating_mul(1u64 << attempt.min(16));
        exp.min(self.config.backoff_cap_ms)
    }

    /// Renders the template and issues the chat-completion request,
    /// retrying 429/5xx/transport failures with exponential backoff.
    /// Templates with the `predict` role are pinned to temperature 0.
    pub fn generate(&self, registry: &PromptRegistry, request: &GenRequest) -> Result<String, GatewayError> {
        let template = registry.get(&request.template_id)?;
        if template.role == TemplateRole::Predict && request.temperature != 0.0 {
            return Err(GatewayError::Config(format!(
                "template {} has the predict role and must run at temperature 0, got {}",
                template.id, request.temperature
            )));
        }
        let prompt = duet_core::template::render_template(template, &request.vars)?;

        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": "You follow instructions exactly and answer in the requested format."},
                {"role": "user", "content": prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = serde_json::json!(seed);
        }
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));

        self.last_retry_delays.lock().expect("poisoned").clear();
        let _permit = self.gate.acquire();
        let mut attempts = 0usize;
        loop {
            attempts += 1;
            let mut req = self.http.post(&url).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let outcome = req.send();
            let retry_after = match outcome {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let value: serde_json::Value = response
                            .json()
                            .map_err(|e| GatewayError::Protocol(format!("non-JSON response: {e}")))?;
                        let text = value
                            .get("choices")
                            .and_then(|c| c.get(0))
                            .and_then(|c| c.get("message"))
                            .and_then(|m| m.get("content"))
                            .and_then(|t| t.as_str())
                            .ok_or_else(|| {
                                GatewayError::Protocol("response lacks choices[0].message.content".into())
                            })?;
                        return Ok(text.to_string());
                    }
                    match status.as_u16() {
                        401 | 403 => return Err(GatewayError::Auth(status.as_u16())),
                        429 => format!("rate limited ({status})"),
                        code if code >= 500 => format!("server error ({status})"),
                        _ => {
                            return Err(GatewayError::Protocol(format!(
                                "unexpected status {status}"
                            )))
                        }
                    }
                }
                Err(e) => format!("transport: {e}"),
            };
            if attempts > self.config.max_retries {
                return Err(GatewayError::Transport {
                    attempts,
                    message: retry_after,
                });
            }
            let delay = self.backoff_ms(attempts - 1);
            log::debug!("retry {attempts} after {delay} ms: {retry_after}");
            self.last_retry_delays.lock().expect("poisoned").push(delay);
            std::thread::sleep(Duration::from_millis(delay));
        }
    }
}

fn fingerprint64(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

/// Remote LLM as the frozen rating predictor: renders the predict prompt at
/// temperature 0, parses the first numeric token, and clamps it into the
/// scale. No number at all is a parse failure, not an error.
pub struct RemoteEnvironment {
    client: LlmClient,
    registry: PromptRegistry,
    scale: RatingScale,
    template_id: String,
    max_tokens: u32,
}

impl RemoteEnvironment {
    pub fn new(client: LlmClient, registry: PromptRegistry, scale: RatingScale) -> Self {
        RemoteEnvironment {
            client,
            registry,
            scale,
            template_id: "rating_predict".into(),
            max_tokens: 16,
        }
    }
}

impl Environment for RemoteEnvironment {
    fn predict(&self, user: &Profile, item: &Profile) -> Result<Prediction, EnvError> {
        let mut vars = BTreeMap::new();
        vars.insert("min".to_string(), self.scale.min.to_string());
        vars.insert("max".to_string(), self.scale.max.to_string());
        vars.insert("user_profile".to_string(), user.text().to_string());
        vars.insert("item_profile".to_string(), item.text().to_string());
        let request = GenRequest {
            template_id: self.template_id.clone(),
            vars,
            temperature: 0.0,
            max_tokens: self.max_tokens,
            seed: None,
        };
        let raw = match self.client.generate(&self.registry, &request) {
            Ok(raw) => raw,
            Err(GatewayError::Transport { message, .. }) => {
                // client-level retries are exhausted; not retryable here
                return Err(EnvError::Transport {
                    retryable: false,
                    message,
                });
            }
            Err(GatewayError::Auth(code)) => {
                return Err(EnvError::Transport {
                    retryable: false,
                    message: format!("auth rejected ({code})"),
                })
            }
            Err(e) => return Err(EnvError::Protocol(e.to_string())),
        };
        Ok(match parse_first_number(&raw) {
            Some(score) => Prediction::parsed(self.scale.clamp_f64(score), Some(raw)),
            None => Prediction::failed(Some(raw)),
        })
    }

    fn scale(&self) -> RatingScale {
        self.scale
    }

    fn fingerprint(&self) -> u64 {
        fingerprint64(&[
            &self.client.config.base_url,
            &self.client.config.model,
            &self.template_id,
        ])
    }
}

/// Remote embedding backend: POST {model, input: [texts]} expecting
/// {data: [{embedding: [...]}]}.
pub struct RemoteEmbedder {
    config: GatewayConfig,
    http: reqwest::blocking::Client,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn from_env(model: impl Into<String>, dim: usize) -> Result<Self, GatewayError> {
        let base_url = std::env::var(EMBED_BASE_URL_VAR)
            .map_err(|_| GatewayError::MissingEnv(EMBED_BASE_URL_VAR.into()))?;
        let config = GatewayConfig {
            base_url,
            api_key: std::env::var(EMBED_API_KEY_VAR).ok(),
            model: model.into(),
            max_retries: 3,
            backoff_base_ms: 250,
            backoff_cap_ms: 4_000,
            timeout_ms: 30_000,
            concurrency: 4,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(RemoteEmbedder { config, http, dim })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let body = serde_json::json!({ "model": self.config.model, "input": texts });
        let mut req = self.http.post(&url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| EmbedError::Backend {
            retryable: true,
            message: e.to_string(),
        })?;
        if !response.status().is_success() {
            return Err(EmbedError::Backend {
                retryable: response.status().as_u16() == 429 || response.status().as_u16() >= 500,
                message: format!("status {}", response.status()),
            });
        }
        let value: serde_json::Value = response.json().map_err(|e| EmbedError::Backend {
            retryable: false,
            message: format!("non-JSON response: {e}"),
        })?;
        let data = value
            .get("data")
            .and_then(|d| d.as_array())
            .ok_or_else(|| EmbedError::Backend {
                retryable: false,
                message: "response lacks data[]".into(),
            })?;
        let mut out = Vec::with_capacity(data.len());
        for entry in data {
            let raw = entry
                .get("embedding")
                .and_then(|e| e.as_array())
                .ok_or_else(|| EmbedError::Backend {
                    retryable: false,
                    message: "entry lacks embedding[]".into(),
                })?;
            let vector: Vec<f64> = raw.iter().filter_map(|v| v.as_f64()).collect();
            if vector.len() != raw.len() {
                return Err(EmbedError::Backend {
                    retryable: false,
                    message: "non-numeric embedding entry".into(),
                });
            }
            if let Some(first) = out.first() {
                let first: &Vec<f64> = first;
                if first.len() != vector.len() {
                    return Err(EmbedError::DimensionMismatch(first.len(), vector.len()));
                }
            }
            out.push(vector);
        }
        Ok(out)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Free-text LLM policy: one single-pass generation per sample, parsed
/// through the tagged grammar. Gradient-based updates do not apply to this
/// policy family, so `logprob` reports an incompatible trace.
pub struct SinglePassPolicy {
    client: LlmClient,
    registry: PromptRegistry,
    pub temperature: f64,
    pub max_tokens: u32,
    pub history_limit: usize,
}

impl SinglePassPolicy {
    pub fn new(client: LlmClient, registry: PromptRegistry) -> Self {
        SinglePassPolicy {
            client,
            registry,
            temperature: 0.8,
            max_tokens: 768,
            history_limit: 10,
        }
    }

    fn render_history(&self, interactions: &[duet_core::corpus::Interaction]) -> String {
        interactions
            .iter()
            .take(self.history_limit)
            .map(|i| format!("- ({} stars) {}", i.rating, i.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn run(&self, state: &HistoryPair, temperature: f64, seed: Option<u64>) -> Result<(ProfileBundle, ActionTrace), PolicyError> {
        let user_ratings: Vec<f64> = state.user_history.iter().map(|i| f64::from(i.rating)).collect();
        let item_ratings: Vec<f64> = state.item_history.iter().map(|i| f64::from(i.rating)).collect();
        let avg = |xs: &[f64]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let mut vars = BTreeMap::new();
        vars.insert("user_history".to_string(), self.render_history(&state.user_history));
        vars.insert("item_history".to_string(), self.render_history(&state.item_history));
        vars.insert(
            "avg_ratings".to_string(),
            format!("user {:.2}, item {:.2}", avg(&user_ratings), avg(&item_ratings)),
        );
        let request = GenRequest {
            template_id: "single_pass".into(),
            vars,
            temperature,
            max_tokens: self.max_tokens,
            seed,
        };
        let raw = self.client.generate(&self.registry, &request).map_err(|e| {
            let retryable = matches!(&e, GatewayError::Transport { .. });
            PolicyError::Generation {
                retryable,
                message: e.to_string(),
            }
        })?;
        let bundle = parse_single_pass_output(&raw)?;
        Ok((bundle, ActionTrace::FreeText { raw }))
    }
}

impl Policy for SinglePassPolicy {
    fn sample(&self, state: &HistoryPair, seed: u64) -> Result<(ProfileBundle, ActionTrace), PolicyError> {
        self.run(state, self.temperature, Some(seed))
    }

    fn logprob(&self, _trace: &ActionTrace) -> Result<f64, PolicyError> {
        Err(PolicyError::IncompatibleTrace)
    }

    fn greedy(&self, state: &HistoryPair) -> Result<ProfileBundle, PolicyError> {
        Ok(self.run(state, 0.0, None)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let config = GatewayConfig {
            base_url: "http://unused".into(),
            api_key: None,
            model: "m".into(),
            max_retries: 5,
            backoff_base_ms: 100,
            backoff_cap_ms: 450,
            timeout_ms: 1000,
            concurrency: 2,
        };
        let client = LlmClient::new(config).unwrap();
        assert_eq!(client.backoff_ms(0), 100);
        assert_eq!(client.backoff_ms(1), 200);
        assert_eq!(client.backoff_ms(2), 400);
        assert_eq!(client.backoff_ms(3), 450, "capped");
    }

    #[test]
    fn predict_role_rejects_nonzero_temperature() {
        let config = GatewayConfig {
            base_url: "http://127.0.0.1:1".into(),
            api_key: None,
            model: "m".into(),
            max_retries: 0,
            backoff_base_ms: 1,
            backoff_cap_ms: 1,
            timeout_ms: 100,
            concurrency: 1,
        };
        let client = LlmClient::new(config).unwrap();
        let registry = PromptRegistry::builtin();
        let request = GenRequest {
            template_id: "rating_predict".into(),
            vars: BTreeMap::new(),
            temperature: 0.7,
            max_tokens: 8,
            seed: None,
        };
        match client.generate(&registry, &request) {
            Err(GatewayError::Config(msg)) => assert!(msg.contains("temperature 0")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fingerprint64(&["a", "b"]), fingerprint64(&["a", "b"]));
        assert_ne!(fingerprint64(&["a", "b"]), fingerprint64(&["ab"]));
    }
}
