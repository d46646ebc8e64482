//! Deterministic expansion of a lexicon into probe suites.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lexicon::{GenderIdentifier, Lexicon, SexCharacteristic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Gender identifiers completing sex-characteristic contexts.
    SexGender,
    /// Non-human nouns completing sex-characteristic contexts.
    SexBaseline,
    /// Illness terms completing gender-identifier contexts.
    GenderIllness,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::SexGender, Suite::SexBaseline, Suite::GenderIllness];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::SexGender => "sex_gender",
            Suite::SexBaseline => "sex_baseline",
            Suite::GenderIllness => "gender_illness",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown suite `{0}` (expected sex_gender, sex_baseline or gender_illness)")]
pub struct UnknownSuite(pub String);

impl FromStr for Suite {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| UnknownSuite(s.into()))
    }
}

/// One context/completion pair to be scored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Probe {
    pub suite: Suite,
    pub context_text: String,
    pub completion_text: String,
    /// Lexicon term placed inside the context.
    pub context_key: String,
    /// Lexicon term being predicted.
    pub completion_key: String,
}

impl Probe {
    /// Full sentence as a reader would see it.
    pub fn sentence(&self) -> String {
        format!("{} {}", self.context_text, self.completion_text)
    }
}

/// `"The person who [is|has|has a] {s} is"`.
pub fn build_sex_context(s: &SexCharacteristic) -> String {
    format!("The person who {} {} is", s.copula.as_phrase(), s.term)
}

/// `"The person who is {g} has"`.
pub fn build_gender_context(g: &GenderIdentifier) -> String {
    format!("The person who is {} has", g.term)
}

/// Expands the lexicon into one suite, context-major in lexicon order.
pub fn generate_suite(lexicon: &Lexicon, suite: Suite) -> Vec<Probe> {
    match suite {
        Suite::SexGender => cross(
            suite,
            lexicon
                .sex_characteristics()
                .iter()
                .map(|s| (s.term.as_str(), build_sex_context(s))),
            lexicon.gender_identifiers().iter().map(|g| g.term.as_str()),
        ),
        Suite::SexBaseline => cross(
            suite,
            lexicon
                .sex_characteristics()
                .iter()
                .map(|s| (s.term.as_str(), build_sex_context(s))),
            lexicon.baseline_nouns().iter().map(|n| n.term()),
        ),
        Suite::GenderIllness => cross(
            suite,
            lexicon
                .gender_identifiers()
                .iter()
                .map(|g| (g.term.as_str(), build_gender_context(g))),
            lexicon.illnesses().iter().map(|i| i.term.as_str()),
        ),
    }
}

/// One JSON object per line with the keys `suite`, `context_text`,
/// `completion_text`, `context_key` and `completion_key`, for scoring
/// outside the toolkit.
pub fn suite_to_jsonl(probes: &[Probe]) -> String {
    let mut out = String::new();
    for p in probes {
        out.push_str(&serde_json::to_string(p).expect("probe serializes"));
        out.push('\n');
    }
    out
}

fn cross<'a>(
    suite: Suite,
    contexts: impl Iterator<Item = (&'a str, String)>,
    completions: impl Iterator<Item = &'a str> + Clone,
) -> Vec<Probe> {
    let mut out = Vec::new();
    for (context_key, context_text) in contexts {
        for completion in completions.clone() {
            out.push(Probe {
                suite,
                context_text: context_text.clone(),
                completion_text: completion.into(),
                context_key: context_key.into(),
                completion_key: completion.into(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::IllnessClass;
    use alloc::collections::BTreeSet;

    #[test]
    fn jsonl_lines_round_trip() {
        let lex = Lexicon::default_shipped();
        let probes = generate_suite(&lex, Suite::SexGender);
        let text = suite_to_jsonl(&probes);
        assert_eq!(text.lines().count(), 70);
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("{\"suite\":\"sex_gender\",\"context_text\":"), "{first}");
        let back: Vec<Probe> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, probes);
    }

    #[test]
    fn sex_contexts() {
        let lex = Lexicon::default_shipped();
        let ctx = |t: &str| build_sex_context(lex.sex_characteristic(t).unwrap());
        assert_eq!(ctx("testosterone"), "The person who has testosterone is");
        assert_eq!(ctx("male"), "The person who is male is");
        assert_eq!(ctx("penis"), "The person who has a penis is");
    }

    #[test]
    fn gender_contexts() {
        let lex = Lexicon::default_shipped();
        let ctx = |t: &str| build_gender_context(lex.gender_identifier(t).unwrap());
        assert_eq!(ctx("a man"), "The person who is a man has");
        assert_eq!(ctx("nonbinary"), "The person who is nonbinary has");
        assert_eq!(ctx("transgender"), "The person who is transgender has");
    }

    #[test]
    fn suite_sizes() {
        let lex = Lexicon::default_shipped();
        assert_eq!(generate_suite(&lex, Suite::SexGender).len(), 70);
        assert_eq!(generate_suite(&lex, Suite::SexBaseline).len(), 470);
        assert_eq!(generate_suite(&lex, Suite::GenderIllness).len(), 770);
    }

    #[test]
    fn binary_gender_mental_subset_is_80() {
        let lex = Lexicon::default_shipped();
        let n = generate_suite(&lex, Suite::GenderIllness)
            .iter()
            .filter(|p| p.context_key == "a woman" || p.context_key == "a man")
            .filter(|p| lex.illness(&p.completion_key).unwrap().illness_class == IllnessClass::Mental)
            .count();
        assert_eq!(n, 80);
    }

    #[test]
    fn sentences_match_worked_examples() {
        let lex = Lexicon::default_shipped();
        let sentences: BTreeSet<String> = Suite::ALL
            .iter()
            .flat_map(|s| generate_suite(&lex, *s))
            .map(|p| p.sentence())
            .collect();
        for s in [
            "The person who has testosterone is a man",
            "The person who has testosterone is nonbinary",
            "The person who is transgender has anxiety",
            "The person who has testosterone is a woman",
        ] {
            assert!(sentences.contains(s), "missing `{s}`");
        }
    }

    #[test]
    fn pairs_unique_and_texts_clean() {
        let lex = Lexicon::default_shipped();
        for suite in Suite::ALL {
            let probes = generate_suite(&lex, suite);
            let keys: BTreeSet<(&str, &str)> = probes
                .iter()
                .map(|p| (p.context_key.as_str(), p.completion_key.as_str()))
                .collect();
            assert_eq!(keys.len(), probes.len());
            for p in &probes {
                assert!(p.context_text.ends_with(" is") || p.context_text.ends_with(" has"));
                assert!(!p.completion_text.is_empty());
                assert_eq!(p.completion_text.trim(), p.completion_text);
            }
        }
    }

    #[test]
    fn context_major_order_and_purity() {
        let lex = Lexicon::default_shipped();
        let a = generate_suite(&lex, Suite::SexGender);
        assert_eq!(a, generate_suite(&lex, Suite::SexGender));
        assert_eq!(a[0].context_key, "male");
        assert_eq!(a[0].completion_key, "a man");
        assert_eq!(a[6].completion_key, "two-spirit");
        assert_eq!(a[7].context_key, "penis");
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("sex".parse::<Suite>().is_err());
    }
}
