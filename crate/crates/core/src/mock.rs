//! Table-driven scorer with a declared synthetic tokenization.
//!
//! Probabilities come from, in order: an explicit per-token list for the
//! (context, completion) pair, an explicit joint probability, or the
//! fallback applied independently to every synthetic token.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::scoring::{
    fingerprint, Architecture, BackendBinding, ModelDescriptor, ScoreError, Scored, Scorer,
    ScorerKind,
};

/// Per-token probability for pairs not listed in the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    Constant(f64),
    /// Pseudo-random but deterministic probability in `[e^floor_log_prob, 1)`
    /// derived from a hash of (seed, context, completion, token index).
    Hashed { seed: u64, floor_log_prob: f64 },
}

#[derive(Debug, Clone)]
pub struct MockScorer {
    descriptor: ModelDescriptor,
    joint: BTreeMap<(String, String), f64>,
    per_token: BTreeMap<(String, String), Vec<f64>>,
    tokenization: BTreeMap<String, Vec<String>>,
    fallback: Fallback,
    calls: usize,
    fail_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MockScorerBuilder {
    model_id: String,
    family: String,
    parameter_count: u64,
    architecture: Architecture,
    joint: BTreeMap<(String, String), f64>,
    per_token: BTreeMap<(String, String), Vec<f64>>,
    tokenization: BTreeMap<String, Vec<String>>,
    fallback: Fallback,
    fail_after: Option<usize>,
}

/// Builds a mock scorer from a joint-probability table and a fallback
/// probability for unlisted pairs.
pub fn make_mock_scorer(
    table: BTreeMap<(String, String), f64>,
    default: f64,
) -> Result<MockScorer, ScoreError> {
    let mut b = MockScorer::builder().default_probability(default);
    b.joint = table;
    b.build()
}

impl MockScorer {
    pub fn builder() -> MockScorerBuilder {
        MockScorerBuilder {
            model_id: "mock".into(),
            family: "mock".into(),
            parameter_count: 1,
            architecture: Architecture::Autoregressive,
            joint: BTreeMap::new(),
            per_token: BTreeMap::new(),
            tokenization: BTreeMap::new(),
            fallback: Fallback::Constant(0.001),
            fail_after: None,
        }
    }

    /// Number of successful and failed `score` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn reset_calls(&mut self) {
        self.calls = 0;
    }

    fn token_count(&self, completion: &str) -> usize {
        self.tokenization.get(completion).map_or(1, Vec::len)
    }

    fn fallback_log_prob(&self, context: &str, completion: &str, index: usize) -> f64 {
        match self.fallback {
            Fallback::Constant(p) => libm::log(p),
            Fallback::Hashed { seed, floor_log_prob } => {
                let mut h = Sha256::new();
                h.update(seed.to_le_bytes());
                h.update((context.len() as u64).to_le_bytes());
                h.update(context.as_bytes());
                h.update(completion.as_bytes());
                h.update((index as u64).to_le_bytes());
                let digest = h.finalize();
                let mut word = [0u8; 8];
                word.copy_from_slice(&digest[..8]);
                // 53 random bits -> [0, 1)
                let u = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
                floor_log_prob * u
            }
        }
    }
}

impl Scorer for MockScorer {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    fn kind(&self) -> ScorerKind {
        ScorerKind::Mock
    }

    fn score(&mut self, context: &str, completion: &str) -> Result<Scored, ScoreError> {
        self.calls += 1;
        if let Some(limit) = self.fail_after {
            if self.calls > limit {
                return Err(ScoreError::backend("injected mock failure", true));
            }
        }
        let key = (context.to_string(), completion.to_string());
        if let Some(probs) = self.per_token.get(&key) {
            return Ok(Scored::from_token_log_probs(
                probs.iter().map(|&p| libm::log(p)).collect(),
            ));
        }
        let n = self.token_count(completion);
        if let Some(&p) = self.joint.get(&key) {
            return Ok(Scored {
                log_prob: libm::log(p),
                token_count: n,
                token_log_probs: None,
            });
        }
        Ok(Scored::from_token_log_probs(
            (0..n)
                .map(|i| self.fallback_log_prob(context, completion, i))
                .collect(),
        ))
    }
}

fn check_probability(p: f64, what: &str) -> Result<(), ScoreError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(ScoreError::Domain(format!(
            "probability {p} for {what} is outside (0, 1]"
        )))
    }
}

impl MockScorerBuilder {
    pub fn model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn family(mut self, family: impl Into<String>) -> Self {
        self.family = family.into();
        self
    }

    pub fn parameter_count(mut self, n: u64) -> Self {
        self.parameter_count = n;
        self
    }

    pub fn architecture(mut self, a: Architecture) -> Self {
        self.architecture = a;
        self
    }

    pub fn default_probability(mut self, p: f64) -> Self {
        self.fallback = Fallback::Constant(p);
        self
    }

    /// Hashed fallback with per-token log-probabilities in `[-20, 0)`.
    pub fn hashed(mut self, seed: u64) -> Self {
        self.fallback = Fallback::Hashed {
            seed,
            floor_log_prob: -20.0,
        };
        self
    }

    pub fn fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }

    /// Joint probability of the whole completion after `context`.
    pub fn joint(mut self, context: &str, completion: &str, p: f64) -> Self {
        self.joint.insert((context.into(), completion.into()), p);
        self
    }

    /// Per-token probabilities; also fixes the token count for this pair.
    pub fn token_probabilities(mut self, context: &str, completion: &str, probs: Vec<f64>) -> Self {
        self.per_token.insert((context.into(), completion.into()), probs);
        self
    }

    /// Synthetic split of `completion` into tokens (default is one token).
    pub fn tokenization<I, T>(mut self, completion: &str, tokens: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        self.tokenization
            .insert(completion.into(), tokens.into_iter().map(Into::into).collect());
        self
    }

    /// Every call after the first `n` fails with a retryable backend error.
    pub fn fail_after(mut self, n: usize) -> Self {
        self.fail_after = Some(n);
        self
    }

    pub fn build(self) -> Result<MockScorer, ScoreError> {
        for ((c, w), &p) in &self.joint {
            check_probability(p, &format!("(`{c}`, `{w}`)"))?;
        }
        for ((c, w), probs) in &self.per_token {
            for &p in probs {
                check_probability(p, &format!("a token of (`{c}`, `{w}`)"))?;
            }
        }
        match self.fallback {
            Fallback::Constant(p) => check_probability(p, "the default")?,
            Fallback::Hashed { floor_log_prob, .. } => {
                if !(floor_log_prob.is_finite() && floor_log_prob < 0.0) {
                    return Err(ScoreError::Domain(format!(
                        "hashed fallback floor {floor_log_prob} must be finite and negative"
                    )));
                }
            }
        }
        if self.parameter_count == 0 {
            return Err(ScoreError::Domain("parameter_count must be positive".into()));
        }

        let mut tok_desc = String::from("mock-tokenizer");
        for (completion, tokens) in &self.tokenization {
            tok_desc.push('\u{0}');
            tok_desc.push_str(completion);
            for t in tokens {
                tok_desc.push('\u{1}');
                tok_desc.push_str(t);
            }
        }
        let descriptor = ModelDescriptor {
            model_id: self.model_id,
            family: self.family,
            parameter_count: self.parameter_count,
            architecture: self.architecture,
            backend: BackendBinding::Mock,
            tokenizer_fingerprint: fingerprint(tok_desc.as_bytes()),
        };
        Ok(MockScorer {
            descriptor,
            joint: self.joint,
            per_token: self.per_token,
            tokenization: self.tokenization,
            fallback: self.fallback,
            calls: 0,
            fail_after: self.fail_after,
        })
    }
}

impl Default for MockScorerBuilder {
    fn default() -> Self {
        MockScorer::builder()
    }
}
