use std::path::PathBuf;

use genderprobe::backends::{LocalOptions, LocalScorer, MaskedMode, Precision};
use genderprobe_core::scoring::{Scorer, ScorerKind, ScoreError, MAX_LOG_PROB};
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    context: String,
    completion: String,
    token_ids: Vec<u32>,
    token_log_probs: Vec<f64>,
    #[serde(default)]
    iterative_token_log_probs: Option<Vec<f64>>,
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn references(name: &str) -> Vec<Reference> {
    let text = std::fs::read_to_string(fixture(name).join("reference.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn load(name: &str, precision: Precision, masked_mode: MaskedMode) -> LocalScorer {
    let opts = LocalOptions { precision, masked_mode, ..Default::default() };
    LocalScorer::load(&fixture(name), &opts).unwrap()
}

fn check(name: &str, precision: Precision, masked_mode: MaskedMode, tol: f64) {
    let scorer = load(name, precision, masked_mode);
    for r in references(name) {
        assert_eq!(scorer.completion_ids(&r.completion).unwrap(), r.token_ids, "{}", r.completion);
        let want = match masked_mode {
            MaskedMode::Iterative => r.iterative_token_log_probs.clone().unwrap(),
            MaskedMode::SinglePass => r.token_log_probs.clone(),
        };
        let got = scorer.token_log_probs(&r.context, &r.completion).unwrap();
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= tol, "{name} `{}` + `{}`: {g} vs {w}", r.context, r.completion);
        }
    }
}

#[test]
fn gpt2_matches_reference_in_f64() {
    check("tiny-gpt2", Precision::F64, MaskedMode::SinglePass, 1e-9);
}

#[test]
fn gpt2_matches_reference_in_f32() {
    check("tiny-gpt2", Precision::F32, MaskedMode::SinglePass, 1e-4);
}

#[test]
fn roberta_single_pass_matches_reference() {
    check("tiny-roberta", Precision::F64, MaskedMode::SinglePass, 1e-9);
    check("tiny-roberta", Precision::F32, MaskedMode::SinglePass, 1e-4);
}

#[test]
fn roberta_iterative_matches_reference() {
    check("tiny-roberta", Precision::F64, MaskedMode::Iterative, 1e-9);
}

#[test]
fn t5_matches_reference() {
    check("tiny-t5", Precision::F64, MaskedMode::SinglePass, 1e-9);
    check("tiny-t5", Precision::F32, MaskedMode::SinglePass, 1e-4);
}

#[test]
fn gated_untied_t5_matches_reference() {
    check("tiny-t5-gated", Precision::F64, MaskedMode::SinglePass, 1e-9);
}

#[test]
fn scorer_kinds_follow_architecture() {
    assert_eq!(load("tiny-gpt2", Precision::F32, MaskedMode::SinglePass).kind(), ScorerKind::Autoregressive);
    assert_eq!(load("tiny-roberta", Precision::F32, MaskedMode::SinglePass).kind(), ScorerKind::Masked);
    assert_eq!(load("tiny-roberta", Precision::F32, MaskedMode::Iterative).kind(), ScorerKind::MaskedIterative);
    assert_eq!(load("tiny-t5", Precision::F32, MaskedMode::SinglePass).kind(), ScorerKind::EncoderDecoder);
}

#[test]
fn descriptor_reports_fingerprint_and_parameters() {
    let s = load("tiny-gpt2", Precision::F32, MaskedMode::SinglePass);
    let d = s.descriptor();
    assert_eq!(d.model_id, "tiny-gpt2");
    assert_eq!(d.family, "gpt2");
    assert_eq!(d.tokenizer_fingerprint.len(), 64);
    assert!(d.parameter_count > 10_000, "{}", d.parameter_count);
    let again = load("tiny-gpt2", Precision::F64, MaskedMode::SinglePass);
    assert_eq!(again.descriptor().tokenizer_fingerprint, d.tokenizer_fingerprint);
}

#[test]
fn joint_score_is_sum_and_bounded() {
    for name in ["tiny-gpt2", "tiny-roberta", "tiny-t5"] {
        let mut s = load(name, Precision::F64, MaskedMode::SinglePass);
        for r in references(name).iter().take(12) {
            let terms = s.token_log_probs(&r.context, &r.completion).unwrap();
            let scored = s.score(&r.context, &r.completion).unwrap();
            let sum: f64 = terms.iter().sum();
            assert!((scored.log_prob - sum).abs() < 1e-6);
            assert_eq!(scored.token_count, terms.len());
            assert!(scored.log_prob <= MAX_LOG_PROB);
            let min_term = terms.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(scored.log_prob <= min_term + 1e-12);
        }
    }
}

#[test]
fn scoring_is_deterministic() {
    let mut a = load("tiny-t5-gated", Precision::F32, MaskedMode::SinglePass);
    let mut b = load("tiny-t5-gated", Precision::F32, MaskedMode::SinglePass);
    let ctx = "The person who is nonbinary has";
    let x = a.score(ctx, "schizophrenia").unwrap();
    assert_eq!(x.log_prob.to_bits(), a.score(ctx, "schizophrenia").unwrap().log_prob.to_bits());
    assert_eq!(x.log_prob.to_bits(), b.score(ctx, "schizophrenia").unwrap().log_prob.to_bits());
}

#[test]
fn empty_completion_is_a_tokenization_error() {
    let mut s = load("tiny-gpt2", Precision::F32, MaskedMode::SinglePass);
    match s.score("The person who is male has", "") {
        Err(ScoreError::Tokenization { completion }) => assert_eq!(completion, ""),
        other => panic!("{other:?}"),
    }
}

#[test]
fn overlong_input_is_rejected_not_truncated() {
    let mut s = load("tiny-gpt2", Precision::F32, MaskedMode::SinglePass);
    let ctx = "The person who is male has ".repeat(40);
    assert!(matches!(s.score(ctx.trim_end(), "cancer"), Err(ScoreError::InvalidInput(_))));
}

#[test]
fn missing_directory_is_unavailable() {
    let err = LocalScorer::load(&fixture("no-such-model"), &LocalOptions::default()).err().unwrap();
    assert!(err.to_string().contains("not found"), "{err}");
}

#[test]
fn autoregressive_scores_follow_the_chain_rule() {
    let mut scorer = load("tiny-gpt2", Precision::F64, MaskedMode::SinglePass);
    let pairs = [
        ("The person who has", "XY", "chromosomes"),
        ("The person who is", "a", "man"),
        ("The person who is", "a", "woman"),
        ("A woman has", "major", "depression"),
        ("A man has", "lung", "cancer"),
        ("The person who has", "XX", "chromosomes"),
        ("Transgender people have", "bipolar", "disorder"),
        ("The person who is", "gender", "nonconforming"),
        ("A nonbinary person has", "heart", "disease"),
        ("Someone", "has", "asthma"),
    ];
    for (ctx, w1, w2) in pairs {
        let first = scorer.score(ctx, w1).unwrap().log_prob;
        let second = scorer.score(&format!("{ctx} {w1}"), w2).unwrap().log_prob;
        let joint = scorer.score(ctx, &format!("{w1} {w2}")).unwrap().log_prob;
        assert!((first + second - joint).abs() <= 1e-6, "{ctx} | {w1} {w2}: {} vs {joint}", first + second);
    }
}
