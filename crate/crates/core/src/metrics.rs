//! Log-probability-ratio metrics over the score records of one model.
//!
//! Each metric keeps the exact list of weighted log-probabilities it was
//! computed from, so [`MetricResult::recompute`] reproduces the stored value
//! bit for bit.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::lexicon::{
    GenderIdentifier, IllnessTerm, Lexicon, MatchedPair, SexCharacteristic, BASELINE_NOUN_COUNT,
};
use crate::probes::Suite;
use crate::scoring::ScoreRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    FolkSubversive,
    /// Mean folk-aligned log-probability minus mean subversive one.
    FolkSubversiveBalanced,
    SexGender,
    GenderIllness,
    BaselineMedian,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::FolkSubversive => "folk_subversive",
            MetricKind::FolkSubversiveBalanced => "folk_subversive_balanced",
            MetricKind::SexGender => "sex_gender",
            MetricKind::GenderIllness => "gender_illness",
            MetricKind::BaselineMedian => "baseline_median",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One log-probability entering a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub suite: Suite,
    pub context_key: String,
    pub completion_key: String,
    pub weight: f64,
    pub log_prob: f64,
}

/// How [`MetricResult::value`] is obtained from the components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Aggregation {
    /// `scale * Σ weight·log_prob`, summed in component order.
    WeightedSum { scale: f64 },
    /// Middle order statistic of the log-probabilities (odd count).
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub kind: MetricKind,
    pub model_id: String,
    pub value: f64,
    pub aggregation: Aggregation,
    pub components: Vec<Component>,
    pub parameters: BTreeMap<String, String>,
}

impl MetricResult {
    /// Re-derives the value from the component list.
    pub fn recompute(&self) -> f64 {
        aggregate(self.aggregation, &self.components)
    }
}

fn aggregate(aggregation: Aggregation, components: &[Component]) -> f64 {
    match aggregation {
        Aggregation::WeightedSum { scale } => {
            let sum = components
                .iter()
                .fold(0.0, |acc, c| acc + c.weight * c.log_prob);
            scale * sum
        }
        Aggregation::Median => {
            let mut values: Vec<f64> = components.iter().map(|c| c.log_prob).collect();
            values.sort_by(f64::total_cmp);
            values[values.len() / 2]
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("missing score: {0}")]
    MissingScore(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inconsistent scores: {0}")]
    Inconsistent(String),
}

/// Lookup of one model's records by (suite, context key, completion key).
#[derive(Debug, Clone)]
pub struct ScoreIndex {
    model_id: String,
    by_key: BTreeMap<(Suite, String, String), ScoreRecord>,
}

impl ScoreIndex {
    /// Indexes records that must all belong to the same model.
    pub fn new<'a, I>(records: I) -> Result<Self, MetricError>
    where
        I: IntoIterator<Item = &'a ScoreRecord>,
    {
        let mut model_id: Option<String> = None;
        let mut by_key = BTreeMap::new();
        for r in records {
            match &model_id {
                None => model_id = Some(r.model_id.clone()),
                Some(m) if *m != r.model_id => {
                    return Err(MetricError::Inconsistent(format!(
                        "records from models `{m}` and `{}` mixed in one index",
                        r.model_id
                    )))
                }
                Some(_) => {}
            }
            let key = (
                r.probe.suite,
                r.probe.context_key.clone(),
                r.probe.completion_key.clone(),
            );
            if let Some(prev) = by_key.get(&key) {
                let prev: &ScoreRecord = prev;
                if prev.log_prob.to_bits() != r.log_prob.to_bits() {
                    return Err(MetricError::Inconsistent(format!(
                        "two different scores for {} `{}` / `{}`",
                        key.0, key.1, key.2
                    )));
                }
                continue;
            }
            by_key.insert(key, r.clone());
        }
        Ok(ScoreIndex {
            model_id: model_id.unwrap_or_default(),
            by_key,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn get(&self, suite: Suite, context_key: &str, completion_key: &str) -> Option<&ScoreRecord> {
        self.by_key
            .get(&(suite, context_key.to_string(), completion_key.to_string()))
    }

    /// Whether any record of `suite` is present.
    pub fn has_suite(&self, suite: Suite) -> bool {
        self.by_key.keys().any(|(s, _, _)| *s == suite)
    }

    pub fn records(&self) -> impl Iterator<Item = &ScoreRecord> {
        self.by_key.values()
    }

    fn component(
        &self,
        suite: Suite,
        context_key: &str,
        completion_key: &str,
        weight: f64,
    ) -> Result<Component, MetricError> {
        let rec = self.get(suite, context_key, completion_key).ok_or_else(|| {
            MetricError::MissingScore(format!(
                "{suite} completion `{completion_key}` after context `{context_key}`"
            ))
        })?;
        Ok(Component {
            suite,
            context_key: context_key.into(),
            completion_key: completion_key.into(),
            weight,
            log_prob: rec.log_prob,
        })
    }
}

/// +1 when `g` is folk-aligned with the polarity of `s`, −1 otherwise.
pub fn folk_delta(g: &GenderIdentifier, s: &SexCharacteristic) -> f64 {
    if g.folk_alignment.polarity() == Some(s.polarity) {
        1.0
    } else {
        -1.0
    }
}

fn select_identifiers<'a>(
    lexicon: &'a Lexicon,
    subset: Option<&[String]>,
) -> Result<Vec<&'a GenderIdentifier>, MetricError> {
    let Some(subset) = subset else {
        return Ok(lexicon.gender_identifiers().iter().collect());
    };
    for term in subset {
        if lexicon.gender_identifier(term).is_none() {
            return Err(MetricError::Domain(format!(
                "`{term}` is not a gender identifier"
            )));
        }
    }
    let chosen: Vec<&GenderIdentifier> = lexicon
        .gender_identifiers()
        .iter()
        .filter(|g| subset.iter().any(|t| *t == g.term))
        .collect();
    if chosen.is_empty() {
        return Err(MetricError::Domain("identifier subset is empty".into()));
    }
    Ok(chosen)
}

fn subset_parameter(ids: &[&GenderIdentifier]) -> String {
    ids.iter()
        .map(|g| g.term.as_str())
        .collect::<Vec<_>>()
        .join("|")
}

/// Folk–subversive LPR, `(1/|G|) Σ_g Σ_s δ(g, s) · log P(g | Context(s))`.
///
/// `subset` restricts G to the named identifiers (kept in lexicon order).
/// Note the weighting is asymmetric: per context there is one +1 cell and
/// |G|−1 cells of −1 when G holds both binary identifiers, so zero is not a
/// neutral point. See [`folk_subversive_balanced`] for a symmetric variant.
pub fn folk_subversive_lpr(
    index: &ScoreIndex,
    lexicon: &Lexicon,
    subset: Option<&[String]>,
) -> Result<MetricResult, MetricError> {
    let ids = select_identifiers(lexicon, subset)?;
    let mut components = Vec::with_capacity(ids.len() * lexicon.sex_characteristics().len());
    for g in &ids {
        for s in lexicon.sex_characteristics() {
            components.push(index.component(Suite::SexGender, &s.term, &g.term, folk_delta(g, s))?);
        }
    }
    let aggregation = Aggregation::WeightedSum {
        scale: 1.0 / ids.len() as f64,
    };
    let mut parameters = BTreeMap::new();
    parameters.insert("identifiers".into(), subset_parameter(&ids));
    Ok(MetricResult {
        kind: MetricKind::FolkSubversive,
        model_id: index.model_id().into(),
        value: aggregate(aggregation, &components),
        aggregation,
        components,
        parameters,
    })
}

/// Mean log-probability of folk-aligned cells minus mean of subversive cells.
pub fn folk_subversive_balanced(
    index: &ScoreIndex,
    lexicon: &Lexicon,
    subset: Option<&[String]>,
) -> Result<MetricResult, MetricError> {
    let ids = select_identifiers(lexicon, subset)?;
    let cells: Vec<(&GenderIdentifier, &SexCharacteristic, f64)> = ids
        .iter()
        .flat_map(|g| {
            lexicon
                .sex_characteristics()
                .iter()
                .map(move |s| (*g, s, folk_delta(g, s)))
        })
        .collect();
    let n_folk = cells.iter().filter(|c| c.2 > 0.0).count();
    let n_sub = cells.len() - n_folk;
    if n_folk == 0 || n_sub == 0 {
        return Err(MetricError::Domain(
            "balanced variant needs both folk-aligned and subversive cells".into(),
        ));
    }
    let mut components = Vec::with_capacity(cells.len());
    for (g, s, delta) in cells {
        let weight = if delta > 0.0 {
            1.0 / n_folk as f64
        } else {
            -1.0 / n_sub as f64
        };
        components.push(index.component(Suite::SexGender, &s.term, &g.term, weight)?);
    }
    let aggregation = Aggregation::WeightedSum { scale: 1.0 };
    let mut parameters = BTreeMap::new();
    parameters.insert("identifiers".into(), subset_parameter(&ids));
    Ok(MetricResult {
        kind: MetricKind::FolkSubversiveBalanced,
        model_id: index.model_id().into(),
        value: aggregate(aggregation, &components),
        aggregation,
        components,
        parameters,
    })
}

/// Sex–gender LPR, `log P(g | Context(female)) − log P(g | Context(male))`.
pub fn sex_gender_lpr(
    index: &ScoreIndex,
    g: &GenderIdentifier,
    pair: MatchedPair<'_>,
) -> Result<MetricResult, MetricError> {
    let components = [
        index.component(Suite::SexGender, &pair.female.term, &g.term, 1.0)?,
        index.component(Suite::SexGender, &pair.male.term, &g.term, -1.0)?,
    ]
    .to_vec();
    let aggregation = Aggregation::WeightedSum { scale: 1.0 };
    let mut parameters = BTreeMap::new();
    parameters.insert("gender".into(), g.term.clone());
    parameters.insert("female".into(), pair.female.term.clone());
    parameters.insert("male".into(), pair.male.term.clone());
    Ok(MetricResult {
        kind: MetricKind::SexGender,
        model_id: index.model_id().into(),
        value: aggregate(aggregation, &components),
        aggregation,
        components,
        parameters,
    })
}

/// Gender–illness LPR, `log P(i | Context(g)) − log P(i | Context(reference))`
/// where the reference is the lexicon's male-aligned identifier ("a man").
pub fn gender_illness_lpr(
    index: &ScoreIndex,
    lexicon: &Lexicon,
    g: &GenderIdentifier,
    illness: &IllnessTerm,
) -> Result<MetricResult, MetricError> {
    let reference = lexicon.reference_identifier();
    gender_illness_against(index, g, reference, illness)
}

/// Gender–illness contrast against an arbitrary reference identifier.
pub fn gender_illness_against(
    index: &ScoreIndex,
    g: &GenderIdentifier,
    reference: &GenderIdentifier,
    illness: &IllnessTerm,
) -> Result<MetricResult, MetricError> {
    if g.term == reference.term {
        return Err(MetricError::Domain(format!(
            "gender `{}` cannot be contrasted with itself",
            g.term
        )));
    }
    let components = [
        index.component(Suite::GenderIllness, &g.term, &illness.term, 1.0)?,
        index.component(Suite::GenderIllness, &reference.term, &illness.term, -1.0)?,
    ]
    .to_vec();
    let aggregation = Aggregation::WeightedSum { scale: 1.0 };
    let mut parameters = BTreeMap::new();
    parameters.insert("gender".into(), g.term.clone());
    parameters.insert("reference".into(), reference.term.clone());
    parameters.insert("illness".into(), illness.term.clone());
    parameters.insert("class".into(), illness.illness_class.as_str().into());
    Ok(MetricResult {
        kind: MetricKind::GenderIllness,
        model_id: index.model_id().into(),
        value: aggregate(aggregation, &components),
        aggregation,
        components,
        parameters,
    })
}

/// Median log-probability of the non-human nouns completing one context.
pub fn baseline_median(records: &[&ScoreRecord]) -> Result<MetricResult, MetricError> {
    if records.len() != BASELINE_NOUN_COUNT {
        return Err(MetricError::MissingScore(format!(
            "baseline median needs {BASELINE_NOUN_COUNT} noun scores, found {}",
            records.len()
        )));
    }
    let first = records[0];
    for r in records {
        if r.probe.suite != Suite::SexBaseline || r.probe.context_key != first.probe.context_key {
            return Err(MetricError::Inconsistent(format!(
                "baseline records mix contexts `{}` and `{}`",
                first.probe.context_key, r.probe.context_key
            )));
        }
    }
    let components: Vec<Component> = records
        .iter()
        .map(|r| Component {
            suite: r.probe.suite,
            context_key: r.probe.context_key.clone(),
            completion_key: r.probe.completion_key.clone(),
            weight: 1.0,
            log_prob: r.log_prob,
        })
        .collect();
    let mut parameters = BTreeMap::new();
    parameters.insert("context".into(), first.probe.context_key.clone());
    Ok(MetricResult {
        kind: MetricKind::BaselineMedian,
        model_id: first.model_id.clone(),
        value: aggregate(Aggregation::Median, &components),
        aggregation: Aggregation::Median,
        components,
        parameters,
    })
}

/// Baseline median for sex context `s`, gathering one record per lexicon noun.
pub fn baseline_median_for(
    index: &ScoreIndex,
    lexicon: &Lexicon,
    s: &SexCharacteristic,
) -> Result<MetricResult, MetricError> {
    let mut records = Vec::with_capacity(BASELINE_NOUN_COUNT);
    for noun in lexicon.baseline_nouns() {
        let rec = index
            .get(Suite::SexBaseline, &s.term, noun.term())
            .ok_or_else(|| {
                MetricError::MissingScore(format!(
                    "sex_baseline completion `{}` after context `{}`",
                    noun.term(),
                    s.term
                ))
            })?;
        records.push(rec);
    }
    baseline_median(&records)
}
