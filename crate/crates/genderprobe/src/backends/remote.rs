//! Client for scorers served over HTTP.
//!
//! `POST /v1/score` takes `{model_id, context, completion}` and answers
//! `{log_prob, token_count, tokenizer_fingerprint}`. `POST /v1/score_batch`
//! takes `{model_id, contexts, completions}` and answers
//! `{log_probs, token_counts, tokenizer_fingerprint}`. Failures carry
//! `{error, retryable}` with a non-2xx status.

use std::thread;
use std::time::Duration;

use genderprobe_core::scoring::{
    Architecture, BackendBinding, ModelDescriptor, ScoreError, Scored, Scorer, ScorerKind,
};
use serde::{Deserialize, Serialize};

use super::BackendError;

/// Context/completion used to learn the tokenizer fingerprint at connect time.
const HANDSHAKE: (&str, &str) = ("The person who is", "male");

#[derive(Debug, Clone)]
pub struct RemoteOptions {
    pub endpoint: String,
    pub model_id: String,
    pub family: String,
    pub parameter_count: u64,
    pub architecture: Architecture,
    /// Bearer token, normally read from an environment variable.
    pub token: Option<String>,
    /// Expected fingerprint; learned from a handshake request when absent.
    pub tokenizer_fingerprint: Option<String>,
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    /// Pairs per `/v1/score_batch` call; 1 uses `/v1/score`.
    pub batch_size: usize,
}

impl RemoteOptions {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            family: "remote".into(),
            parameter_count: 1,
            architecture: Architecture::Autoregressive,
            token: None,
            tokenizer_fingerprint: None,
            max_retries: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
            batch_size: 1,
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    model_id: &'a str,
    context: &'a str,
    completion: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    log_prob: f64,
    token_count: usize,
    tokenizer_fingerprint: String,
}

#[derive(Serialize)]
struct BatchRequest<'a> {
    model_id: &'a str,
    contexts: Vec<&'a str>,
    completions: Vec<&'a str>,
}

#[derive(Deserialize)]
struct BatchResponse {
    log_probs: Vec<f64>,
    token_counts: Vec<usize>,
    tokenizer_fingerprint: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    retryable: bool,
}

pub struct RemoteScorer {
    descriptor: ModelDescriptor,
    agent: ureq::Agent,
    opts: RemoteOptions,
}

impl RemoteScorer {
    pub fn connect(opts: RemoteOptions) -> Result<Self, BackendError> {
        if opts.parameter_count == 0 {
            return Err(BackendError::Config("parameter_count must be positive".into()));
        }
        let agent = ureq::AgentBuilder::new().timeout(opts.timeout).build();
        let mut scorer = Self {
            descriptor: ModelDescriptor {
                model_id: opts.model_id.clone(),
                family: opts.family.clone(),
                parameter_count: opts.parameter_count,
                architecture: opts.architecture,
                backend: BackendBinding::Remote { endpoint: opts.endpoint.clone() },
                tokenizer_fingerprint: opts.tokenizer_fingerprint.clone().unwrap_or_default(),
            },
            agent,
            opts,
        };
        if scorer.descriptor.tokenizer_fingerprint.is_empty() {
            let req = ScoreRequest {
                model_id: &scorer.opts.model_id,
                context: HANDSHAKE.0,
                completion: HANDSHAKE.1,
            };
            let resp: ScoreResponse = scorer
                .post("/v1/score", &req)
                .map_err(|e| BackendError::Unavailable(format!("handshake failed: {e}")))?;
            scorer.descriptor.tokenizer_fingerprint = resp.tokenizer_fingerprint;
        }
        Ok(scorer)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.opts.endpoint.trim_end_matches('/'))
    }

    fn post<B: Serialize, R: serde::de::DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ScoreError> {
        let url = self.url(path);
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(&url);
            if let Some(token) = &self.opts.token {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
            let err = match req.send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json::<R>()
                        .map_err(|e| ScoreError::backend(format!("{url}: malformed response: {e}"), false))
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    match serde_json::from_str::<ErrorBody>(&text) {
                        Ok(b) => ScoreError::backend(format!("{url}: HTTP {code}: {}", b.error), b.retryable),
                        Err(_) => ScoreError::backend(
                            format!("{url}: HTTP {code}: {}", text.trim()),
                            code == 429 || code >= 500,
                        ),
                    }
                }
                Err(ureq::Error::Transport(t)) => ScoreError::backend(t.to_string(), true),
            };
            if !err.is_retryable() || attempt >= self.opts.max_retries {
                return Err(err);
            }
            thread::sleep(self.opts.backoff * 2u32.pow(attempt));
            attempt += 1;
        }
    }

    fn check_fingerprint(&self, got: &str) -> Result<(), ScoreError> {
        if got != self.descriptor.tokenizer_fingerprint {
            return Err(ScoreError::backend(
                format!(
                    "tokenizer fingerprint changed from {} to {got}",
                    self.descriptor.tokenizer_fingerprint
                ),
                false,
            ));
        }
        Ok(())
    }
}

impl Scorer for RemoteScorer {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    fn kind(&self) -> ScorerKind {
        ScorerKind::Remote
    }

    fn score(&mut self, context: &str, completion: &str) -> Result<Scored, ScoreError> {
        let req = ScoreRequest { model_id: &self.opts.model_id, context, completion };
        let resp: ScoreResponse = self.post("/v1/score", &req)?;
        self.check_fingerprint(&resp.tokenizer_fingerprint)?;
        Ok(Scored { log_prob: resp.log_prob, token_count: resp.token_count, token_log_probs: None })
    }

    fn score_many(&mut self, pairs: &[(&str, &str)]) -> Result<Vec<Scored>, ScoreError> {
        if pairs.len() <= 1 || self.opts.batch_size <= 1 {
            return pairs.iter().map(|(c, w)| self.score(c, w)).collect();
        }
        let req = BatchRequest {
            model_id: &self.opts.model_id,
            contexts: pairs.iter().map(|p| p.0).collect(),
            completions: pairs.iter().map(|p| p.1).collect(),
        };
        let resp: BatchResponse = self.post("/v1/score_batch", &req)?;
        self.check_fingerprint(&resp.tokenizer_fingerprint)?;
        if resp.log_probs.len() != pairs.len() || resp.token_counts.len() != pairs.len() {
            return Err(ScoreError::backend(
                format!(
                    "batch of {} pairs answered with {} log_probs and {} token_counts",
                    pairs.len(),
                    resp.log_probs.len(),
                    resp.token_counts.len()
                ),
                false,
            ));
        }
        Ok(resp
            .log_probs
            .into_iter()
            .zip(resp.token_counts)
            .map(|(log_prob, token_count)| Scored { log_prob, token_count, token_log_probs: None })
            .collect())
    }

    fn preferred_batch_size(&self) -> usize {
        self.opts.batch_size.max(1)
    }
}
