//! Scoring contract: scorers turn (context, completion) pairs into joint
//! natural-log probabilities; records are cached under content-derived keys.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::probes::Probe;

/// Two log-probabilities for the same cache key closer than this are equal.
pub const CONFLICT_TOLERANCE: f64 = 1e-9;

/// Largest log-probability accepted from a backend. Anything above is not a
/// probability and points at a broken backend.
pub const MAX_LOG_PROB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Autoregressive,
    Masked,
    EncoderDecoder,
}

/// How a record was produced. Part of every cache key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Autoregressive,
    /// Masked model, all completion slots masked in a single pass.
    Masked,
    /// Masked model, slots unmasked left to right.
    MaskedIterative,
    EncoderDecoder,
    Mock,
    Remote,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Autoregressive => "autoregressive",
            ScorerKind::Masked => "masked",
            ScorerKind::MaskedIterative => "masked_iterative",
            ScorerKind::EncoderDecoder => "encoder_decoder",
            ScorerKind::Mock => "mock",
            ScorerKind::Remote => "remote",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a model's scores come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendBinding {
    Mock,
    /// Weights and tokenizer in a local directory.
    Local { path: String },
    /// Remote scorer speaking the `/v1/score` protocol.
    Remote { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub family: String,
    pub parameter_count: u64,
    pub architecture: Architecture,
    pub backend: BackendBinding,
    /// Stable hash identifying the tokenizer.
    pub tokenizer_fingerprint: String,
}

/// Raw output of a scorer for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub log_prob: f64,
    pub token_count: usize,
    /// Per-token terms, when the backend exposes them.
    pub token_log_probs: Option<Vec<f64>>,
}

impl Scored {
    pub fn from_token_log_probs(terms: Vec<f64>) -> Self {
        Scored {
            log_prob: terms.iter().sum(),
            token_count: terms.len(),
            token_log_probs: Some(terms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model_id: String,
    pub probe: Probe,
    pub log_prob: f64,
    pub token_count: usize,
    pub scorer_kind: ScorerKind,
    pub cache_key: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("backend error: {message}{}", if *.retryable { " (retryable)" } else { "" })]
    Backend { message: String, retryable: bool },
    #[error("completion `{completion}` produced no tokens")]
    Tokenization { completion: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl ScoreError {
    pub fn backend(message: impl Into<String>, retryable: bool) -> Self {
        ScoreError::Backend {
            message: message.into(),
            retryable,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, ScoreError::Backend { retryable: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error(
        "conflicting score for key {key}: stored log_prob {stored} / {stored_tokens} tokens, \
         new {new} / {new_tokens} tokens"
    )]
    Conflict {
        key: String,
        stored: f64,
        new: f64,
        stored_tokens: usize,
        new_tokens: usize,
    },
    #[error("storage error: {0}")]
    Storage(String),
}

/// A score batch failed at `index`; records before it were persisted.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BatchError {
    #[error("probe {index}: {source}")]
    Score { index: usize, source: ScoreError },
    #[error("probe {index}: {source}")]
    Store { index: usize, source: StoreError },
}

impl BatchError {
    pub fn index(&self) -> usize {
        match self {
            BatchError::Score { index, .. } | BatchError::Store { index, .. } => *index,
        }
    }
}

/// A model binding that deterministically scores completions.
///
/// Implementations need not be thread-safe; the batch driver calls them
/// sequentially.
pub trait Scorer {
    fn descriptor(&self) -> &ModelDescriptor;

    fn kind(&self) -> ScorerKind;

    /// Joint log-probability of `completion` following `context`.
    fn score(&mut self, context: &str, completion: &str) -> Result<Scored, ScoreError>;

    /// Scores several pairs at once. Backends with a native batch path
    /// override this together with [`Scorer::preferred_batch_size`].
    fn score_many(&mut self, pairs: &[(&str, &str)]) -> Result<Vec<Scored>, ScoreError> {
        pairs.iter().map(|(c, w)| self.score(c, w)).collect()
    }

    fn preferred_batch_size(&self) -> usize {
        1
    }
}

impl<S: Scorer + ?Sized> Scorer for &mut S {
    fn descriptor(&self) -> &ModelDescriptor {
        (**self).descriptor()
    }
    fn kind(&self) -> ScorerKind {
        (**self).kind()
    }
    fn score(&mut self, context: &str, completion: &str) -> Result<Scored, ScoreError> {
        (**self).score(context, completion)
    }
    fn score_many(&mut self, pairs: &[(&str, &str)]) -> Result<Vec<Scored>, ScoreError> {
        (**self).score_many(pairs)
    }
    fn preferred_batch_size(&self) -> usize {
        (**self).preferred_batch_size()
    }
}

impl<S: Scorer + ?Sized> Scorer for alloc::boxed::Box<S> {
    fn descriptor(&self) -> &ModelDescriptor {
        (**self).descriptor()
    }
    fn kind(&self) -> ScorerKind {
        (**self).kind()
    }
    fn score(&mut self, context: &str, completion: &str) -> Result<Scored, ScoreError> {
        (**self).score(context, completion)
    }
    fn score_many(&mut self, pairs: &[(&str, &str)]) -> Result<Vec<Scored>, ScoreError> {
        (**self).score_many(pairs)
    }
    fn preferred_batch_size(&self) -> usize {
        (**self).preferred_batch_size()
    }
}

/// Durable or in-memory map from cache key to record.
pub trait ScoreStore {
    fn get(&self, cache_key: &str) -> Option<ScoreRecord>;

    /// Stores a record. Re-putting an equal record is a no-op; a different
    /// value under the same key is a [`StoreError::Conflict`].
    fn put(&mut self, record: ScoreRecord) -> Result<(), StoreError>;
}

/// Content hash of everything that determines a score.
pub fn cache_key(
    model_id: &str,
    tokenizer_fingerprint: &str,
    context: &str,
    completion: &str,
    kind: ScorerKind,
) -> String {
    let mut hasher = Sha256::new();
    for field in [model_id, tokenizer_fingerprint, context, completion, kind.as_str()] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 0xf) as usize] as char);
    }
    s
}

/// Hex SHA-256 of arbitrary bytes, used for fingerprints.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Cache key `scorer` would assign to `probe`.
pub fn probe_cache_key<S: Scorer + ?Sized>(scorer: &S, probe: &Probe) -> String {
    let d = scorer.descriptor();
    cache_key(
        &d.model_id,
        &d.tokenizer_fingerprint,
        &probe.context_text,
        &probe.completion_text,
        scorer.kind(),
    )
}

/// Checks that a stored record and a new one agree.
pub fn check_conflict(stored: &ScoreRecord, new: &ScoreRecord) -> Result<(), StoreError> {
    let differs = (stored.log_prob - new.log_prob).abs() > CONFLICT_TOLERANCE
        || stored.log_prob.is_nan() != new.log_prob.is_nan()
        || stored.token_count != new.token_count;
    if differs {
        return Err(StoreError::Conflict {
            key: new.cache_key.clone(),
            stored: stored.log_prob,
            new: new.log_prob,
            stored_tokens: stored.token_count,
            new_tokens: new.token_count,
        });
    }
    Ok(())
}

fn validate_scored(scored: &Scored, completion: &str) -> Result<(), ScoreError> {
    if scored.token_count == 0 {
        return Err(ScoreError::Tokenization {
            completion: completion.into(),
        });
    }
    if !scored.log_prob.is_finite() {
        return Err(ScoreError::backend(
            format!("non-finite log_prob {} for `{completion}`", scored.log_prob),
            false,
        ));
    }
    if scored.log_prob > MAX_LOG_PROB {
        return Err(ScoreError::backend(
            format!("log_prob {} > 0 for `{completion}`", scored.log_prob),
            false,
        ));
    }
    Ok(())
}

fn make_record<S: Scorer + ?Sized>(
    scorer: &S,
    probe: &Probe,
    scored: &Scored,
) -> Result<ScoreRecord, ScoreError> {
    validate_scored(scored, &probe.completion_text)?;
    Ok(ScoreRecord {
        model_id: scorer.descriptor().model_id.clone(),
        probe: probe.clone(),
        log_prob: scored.log_prob,
        token_count: scored.token_count,
        scorer_kind: scorer.kind(),
        cache_key: probe_cache_key(scorer, probe),
    })
}

fn check_probe(probe: &Probe) -> Result<(), ScoreError> {
    if probe.context_text.is_empty() || probe.completion_text.is_empty() {
        return Err(ScoreError::InvalidInput(
            "context and completion must be non-empty".into(),
        ));
    }
    Ok(())
}

/// Scores a single probe and wraps the result in a validated record.
pub fn score_completion<S: Scorer + ?Sized>(
    scorer: &mut S,
    probe: &Probe,
) -> Result<ScoreRecord, ScoreError> {
    check_probe(probe)?;
    let scored = scorer.score(&probe.context_text, &probe.completion_text)?;
    make_record(scorer, probe, &scored)
}

/// Scores every probe, consulting and filling `store`.
///
/// Records already in the store are returned without calling the scorer.
/// Output order matches input order. On failure, every record scored before
/// the failing probe has already been written to the store.
pub fn score_batch<S: Scorer + ?Sized, St: ScoreStore + ?Sized>(
    scorer: &mut S,
    probes: &[Probe],
    store: &mut St,
) -> Result<Vec<ScoreRecord>, BatchError> {
    let mut results: Vec<Option<ScoreRecord>> = Vec::with_capacity(probes.len());
    let mut pending = Vec::new();
    for (index, probe) in probes.iter().enumerate() {
        check_probe(probe).map_err(|source| BatchError::Score { index, source })?;
        match store.get(&probe_cache_key(scorer, probe)) {
            Some(rec) => results.push(Some(rec)),
            None => {
                results.push(None);
                pending.push(index);
            }
        }
    }

    let chunk = scorer.preferred_batch_size().max(1);
    for indices in pending.chunks(chunk) {
        let pairs: Vec<(&str, &str)> = indices
            .iter()
            .map(|&i| (probes[i].context_text.as_str(), probes[i].completion_text.as_str()))
            .collect();
        let scored = scorer.score_many(&pairs).map_err(|source| BatchError::Score {
            index: indices[0],
            source,
        })?;
        if scored.len() != indices.len() {
            return Err(BatchError::Score {
                index: indices[0],
                source: ScoreError::backend(
                    format!("backend returned {} scores for {} pairs", scored.len(), indices.len()),
                    false,
                ),
            });
        }
        for (&index, scored) in indices.iter().zip(&scored) {
            let record = make_record(scorer, &probes[index], scored)
                .map_err(|source| BatchError::Score { index, source })?;
            store
                .put(record.clone())
                .map_err(|source| BatchError::Store { index, source })?;
            results[index] = Some(record);
        }
    }

    Ok(results
        .into_iter()
        .map(|r| r.expect("every probe scored or cached"))
        .collect())
}

/// Store backed by an ordered map, for tests and one-shot runs.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    records: BTreeMap<String, ScoreRecord>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ScoreRecord> {
        self.records.values()
    }
}

impl ScoreStore for MemoryStore {
    fn get(&self, cache_key: &str) -> Option<ScoreRecord> {
        self.records.get(cache_key).cloned()
    }

    fn put(&mut self, record: ScoreRecord) -> Result<(), StoreError> {
        if let Some(stored) = self.records.get(&record.cache_key) {
            return check_conflict(stored, &record);
        }
        self.records.insert(record.cache_key.clone(), record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Lexicon;
    use crate::mock::MockScorer;
    use crate::probes::{generate_suite, Suite};
    use alloc::vec;

    fn probe(context: &str, completion: &str) -> Probe {
        Probe {
            suite: Suite::SexGender,
            context_text: context.into(),
            completion_text: completion.into(),
            context_key: "x".into(),
            completion_key: completion.into(),
        }
    }

    #[test]
    fn cache_key_sensitive_to_every_field() {
        let base = cache_key("m", "t", "c", "w", ScorerKind::Mock);
        assert_eq!(base, cache_key("m", "t", "c", "w", ScorerKind::Mock));
        assert_eq!(base.len(), 64);
        for other in [
            cache_key("m2", "t", "c", "w", ScorerKind::Mock),
            cache_key("m", "t2", "c", "w", ScorerKind::Mock),
            cache_key("m", "t", "c2", "w", ScorerKind::Mock),
            cache_key("m", "t", "c", "w2", ScorerKind::Mock),
            cache_key("m", "t", "c", "w", ScorerKind::Remote),
            // field boundaries are length-prefixed
            cache_key("mt", "", "c", "w", ScorerKind::Mock),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn single_token_probability_one() {
        let mut scorer = MockScorer::builder().default_probability(1.0).build().unwrap();
        let rec = score_completion(&mut scorer, &probe("X is", "a man")).unwrap();
        assert_eq!(rec.log_prob, 0.0);
        assert_eq!(rec.token_count, 1);
        assert_eq!(rec.scorer_kind, ScorerKind::Mock);
    }

    #[test]
    fn three_token_product() {
        let mut scorer = MockScorer::builder()
            .token_probabilities("X is", "abc", vec![0.5, 0.2, 0.1])
            .build()
            .unwrap();
        let rec = score_completion(&mut scorer, &probe("X is", "abc")).unwrap();
        assert!((rec.log_prob - (-4.605170185988091)).abs() < 1e-12);
        assert_eq!(rec.token_count, 3);
    }

    #[test]
    fn nonbinary_split_in_three() {
        let mut scorer = MockScorer::builder()
            .default_probability(0.1)
            .tokenization("nonbinary", ["non", "bi", "nary"])
            .build()
            .unwrap();
        let rec = score_completion(&mut scorer, &probe("X is", "nonbinary")).unwrap();
        assert!((rec.log_prob - (-6.907755278982137)).abs() < 1e-12);
        assert_eq!(rec.token_count, 3);
    }

    #[test]
    fn empty_inputs_rejected() {
        let mut scorer = MockScorer::builder().build().unwrap();
        assert!(matches!(
            score_completion(&mut scorer, &probe("", "a")),
            Err(ScoreError::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_token_completion_is_tokenization_error() {
        let mut scorer = MockScorer::builder()
            .tokenization("void", [] as [&str; 0])
            .build()
            .unwrap();
        assert!(matches!(
            score_completion(&mut scorer, &probe("X is", "void")),
            Err(ScoreError::Tokenization { .. })
        ));
    }

    #[test]
    fn batch_cold_warm_partial() {
        let lex = Lexicon::default_shipped();
        let probes = generate_suite(&lex, Suite::SexGender);
        let mut scorer = MockScorer::builder().hashed(7).build().unwrap();
        let mut store = MemoryStore::new();

        let cold = score_batch(&mut scorer, &probes, &mut store).unwrap();
        assert_eq!(scorer.calls(), 70);
        assert_eq!(cold.len(), 70);
        for (r, p) in cold.iter().zip(&probes) {
            assert_eq!(&r.probe, p);
        }

        let warm = score_batch(&mut scorer, &probes, &mut store).unwrap();
        assert_eq!(scorer.calls(), 70);
        assert_eq!(cold, warm);

        let mut partial = MemoryStore::new();
        for r in &cold[..30] {
            partial.put(r.clone()).unwrap();
        }
        let mut fresh = MockScorer::builder().hashed(7).build().unwrap();
        let again = score_batch(&mut fresh, &probes, &mut partial).unwrap();
        assert_eq!(fresh.calls(), 40);
        assert_eq!(again, cold);
    }

    #[test]
    fn batch_failure_reports_index_and_persists_prefix() {
        let lex = Lexicon::default_shipped();
        let probes = generate_suite(&lex, Suite::SexGender);
        let mut scorer = MockScorer::builder().fail_after(10).build().unwrap();
        let mut store = MemoryStore::new();
        let err = score_batch(&mut scorer, &probes, &mut store).unwrap_err();
        assert_eq!(err.index(), 10);
        assert_eq!(store.len(), 10);
        assert!(matches!(err, BatchError::Score { source: ScoreError::Backend { retryable: true, .. }, .. }));
    }

    #[test]
    fn store_conflicts() {
        let mut scorer = MockScorer::builder().default_probability(0.5).build().unwrap();
        let rec = score_completion(&mut scorer, &probe("X is", "a")).unwrap();
        let mut store = MemoryStore::new();
        store.put(rec.clone()).unwrap();
        assert_eq!(store.get(&rec.cache_key), Some(rec.clone()));
        store.put(rec.clone()).unwrap();
        let mut tiny = rec.clone();
        tiny.log_prob += 1e-12;
        store.put(tiny).unwrap();
        let mut drifted = rec.clone();
        drifted.log_prob += 1e-6;
        assert!(matches!(store.put(drifted), Err(StoreError::Conflict { .. })));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn improper_backend_values_rejected() {
        let s = Scored { log_prob: 0.5, token_count: 1, token_log_probs: None };
        assert!(validate_scored(&s, "w").is_err());
        let s = Scored { log_prob: f64::NEG_INFINITY, token_count: 1, token_log_probs: None };
        assert!(validate_scored(&s, "w").is_err());
    }
}
