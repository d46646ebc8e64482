//! Aggregated views over metrics: per-model metric sets, illness rankings,
//! mental/physical comparisons and the size trend across models.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::lexicon::{IllnessClass, Lexicon};
use crate::metrics::{
    baseline_median_for, folk_subversive_balanced, folk_subversive_lpr, gender_illness_lpr,
    sex_gender_lpr, MetricError, MetricResult, ScoreIndex,
};
use crate::probes::Suite;
use crate::stats::{mann_whitney_u, spearman_rho, StatsError, TestResult};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Options for [`evaluate_model`].
#[derive(Debug, Clone, Default)]
pub struct EvaluationOptions {
    /// Restricts the identifier set of the folk–subversive metric.
    pub identifier_subset: Option<Vec<String>>,
}

/// Every metric computable from the suites present for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetrics {
    pub model_id: String,
    pub folk_subversive: Option<MetricResult>,
    pub folk_subversive_balanced: Option<MetricResult>,
    /// Identifier-major, then matched pairs in lexicon order.
    pub sex_gender: Vec<MetricResult>,
    /// Non-reference identifier-major, then illnesses in lexicon order.
    pub gender_illness: Vec<MetricResult>,
    /// One per sex context, in lexicon order.
    pub baseline_medians: Vec<MetricResult>,
}

impl ModelMetrics {
    pub fn all(&self) -> impl Iterator<Item = &MetricResult> {
        self.folk_subversive
            .iter()
            .chain(self.folk_subversive_balanced.iter())
            .chain(self.sex_gender.iter())
            .chain(self.gender_illness.iter())
            .chain(self.baseline_medians.iter())
    }

    /// Gender–illness LPRs for one gender keyed by illness term.
    pub fn illness_lprs(&self, gender: &str) -> BTreeMap<String, f64> {
        self.gender_illness
            .iter()
            .filter(|m| m.parameters.get("gender").map(String::as_str) == Some(gender))
            .map(|m| (m.parameters["illness"].clone(), m.value))
            .collect()
    }
}

/// Computes all metrics whose suites appear in `index`.
///
/// A suite that is present must be complete; a missing probe is an error
/// rather than a silently skipped metric.
pub fn evaluate_model(
    index: &ScoreIndex,
    lexicon: &Lexicon,
    options: &EvaluationOptions,
) -> Result<ModelMetrics, AnalysisError> {
    let mut out = ModelMetrics {
        model_id: index.model_id().into(),
        folk_subversive: None,
        folk_subversive_balanced: None,
        sex_gender: Vec::new(),
        gender_illness: Vec::new(),
        baseline_medians: Vec::new(),
    };
    if index.has_suite(Suite::SexGender) {
        let subset = options.identifier_subset.as_deref();
        out.folk_subversive = Some(folk_subversive_lpr(index, lexicon, subset)?);
        out.folk_subversive_balanced = Some(folk_subversive_balanced(index, lexicon, subset)?);
        for g in lexicon.gender_identifiers() {
            for pair in lexicon.matched_pairs() {
                out.sex_gender.push(sex_gender_lpr(index, g, pair)?);
            }
        }
    }
    if index.has_suite(Suite::GenderIllness) {
        let reference = lexicon.reference_identifier();
        for g in lexicon.gender_identifiers().iter().filter(|g| g.term != reference.term) {
            for i in lexicon.illnesses() {
                out.gender_illness.push(gender_illness_lpr(index, lexicon, g, i)?);
            }
        }
    }
    if index.has_suite(Suite::SexBaseline) {
        for s in lexicon.sex_characteristics() {
            out.baseline_medians.push(baseline_median_for(index, lexicon, s)?);
        }
    }
    Ok(out)
}

/// A completion falls below the non-human baseline iff its log-probability
/// is strictly smaller than the context's baseline median.
pub fn below_baseline(log_prob: f64, baseline_median: f64) -> bool {
    log_prob < baseline_median
}

/// One bar of the per-context gender probability view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub model_id: String,
    pub context: String,
    pub gender: String,
    pub log_prob: f64,
    pub baseline_median: Option<f64>,
    pub below_baseline: Option<bool>,
}

/// Per-context gender log-probabilities, annotated against the baseline
/// median when the baseline suite was scored.
pub fn context_rows(
    index: &ScoreIndex,
    lexicon: &Lexicon,
    metrics: &ModelMetrics,
) -> Result<Vec<ContextRow>, AnalysisError> {
    let medians: BTreeMap<&str, f64> = metrics
        .baseline_medians
        .iter()
        .map(|m| (m.parameters["context"].as_str(), m.value))
        .collect();
    let mut rows = Vec::new();
    for s in lexicon.sex_characteristics() {
        let median = medians.get(s.term.as_str()).copied();
        for g in lexicon.gender_identifiers() {
            let rec = index.get(Suite::SexGender, &s.term, &g.term).ok_or_else(|| {
                MetricError::MissingScore(format!(
                    "sex_gender completion `{}` after context `{}`",
                    g.term, s.term
                ))
            })?;
            rows.push(ContextRow {
                model_id: index.model_id().into(),
                context: s.term.clone(),
                gender: g.term.clone(),
                log_prob: rec.log_prob,
                baseline_median: median,
                below_baseline: median.map(|m| below_baseline(rec.log_prob, m)),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllnessRanking {
    pub model_id: String,
    pub gender: String,
    /// Highest LPRs, descending.
    pub top: Vec<(String, f64)>,
    /// Lowest LPRs, ascending.
    pub bottom: Vec<(String, f64)>,
}

/// The `k` most and `k` least associated illnesses.
///
/// `lprs` must be in lexicon order; equal values keep that order. Top
/// and bottom never share an illness: with fewer than `2k` entries the
/// input is split, the larger half (rounded up) going to `top`.
pub fn rank_illnesses(
    model_id: &str,
    gender: &str,
    lprs: &[(String, f64)],
    k: usize,
) -> IllnessRanking {
    let n_top = if lprs.len() >= 2 * k { k } else { lprs.len().div_ceil(2) };
    let mut order: Vec<usize> = (0..lprs.len()).collect();
    order.sort_by(|&a, &b| lprs[b].1.total_cmp(&lprs[a].1));
    let top_idx: Vec<usize> = order[..n_top].to_vec();

    let mut rest: Vec<usize> = (0..lprs.len()).filter(|i| !top_idx.contains(i)).collect();
    rest.sort_by(|&a, &b| lprs[a].1.total_cmp(&lprs[b].1));
    let n_bottom = k.min(rest.len());

    IllnessRanking {
        model_id: model_id.into(),
        gender: gender.into(),
        top: top_idx.iter().map(|&i| lprs[i].clone()).collect(),
        bottom: rest[..n_bottom].iter().map(|&i| lprs[i].clone()).collect(),
    }
}

/// Star annotation: `***` p < 0.001, `**` p < 0.01, `*` p < 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentalPhysicalComparison {
    pub model_id: String,
    pub gender: String,
    pub mental: Vec<f64>,
    pub physical: Vec<f64>,
    pub test: TestResult,
    pub stars: String,
}

/// Splits one gender's illness LPRs by class and tests mental vs physical.
pub fn mental_physical_comparison(
    model_id: &str,
    gender: &str,
    lprs: &BTreeMap<String, f64>,
    lexicon: &Lexicon,
) -> Result<MentalPhysicalComparison, AnalysisError> {
    let mut mental = Vec::new();
    let mut physical = Vec::new();
    for illness in lexicon.illnesses() {
        let v = *lprs.get(&illness.term).ok_or_else(|| {
            MetricError::MissingScore(format!(
                "gender_illness LPR for `{gender}` / `{}`",
                illness.term
            ))
        })?;
        match illness.illness_class {
            IllnessClass::Mental => mental.push(v),
            IllnessClass::Physical => physical.push(v),
        }
    }
    let test = mann_whitney_u(&mental, &physical)?;
    Ok(MentalPhysicalComparison {
        model_id: model_id.into(),
        gender: gender.into(),
        mental,
        physical,
        stars: significance_stars(test.p_value).into(),
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub model_id: String,
    pub parameter_count: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeTrend {
    pub test: TestResult,
    /// Sorted by parameter count, then model id.
    pub rows: Vec<ScatterRow>,
}

/// Spearman correlation of model size against folk–subversive LPR.
pub fn size_trend(points: &[ScatterRow]) -> Result<SizeTrend, AnalysisError> {
    let mut rows = points.to_vec();
    rows.sort_by(|a, b| {
        a.parameter_count
            .cmp(&b.parameter_count)
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    let x: Vec<f64> = rows.iter().map(|r| r.parameter_count as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let test = spearman_rho(&x, &y)?;
    Ok(SizeTrend { test, rows })
}
