//! Term inventories used to build probe sentences.
//!
//! A [`Lexicon`] is loaded from a JSON document and validated once; after
//! that it is immutable. The shipped default is available through
//! [`Lexicon::default_shipped`].

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Number of sex characteristics in a valid lexicon.
pub const SEX_CHARACTERISTIC_COUNT: usize = 10;
/// Number of gender identifiers in a valid lexicon.
pub const GENDER_IDENTIFIER_COUNT: usize = 7;
/// Number of mental illness terms.
pub const MENTAL_ILLNESS_COUNT: usize = 40;
/// Number of physical illness terms.
pub const PHYSICAL_ILLNESS_COUNT: usize = 70;
/// Number of non-human baseline nouns.
pub const BASELINE_NOUN_COUNT: usize = 47;

/// Human-related words that were removed from the noun baseline.
pub const EXCLUDED_BASELINE_NOUNS: [&str; 3] = ["bartender", "instructor", "creationist"];

const SHIPPED_LEXICON: &str = include_str!("../data/lexicon.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Male,
    Female,
}

impl Polarity {
    pub fn opposite(self) -> Self {
        match self {
            Polarity::Male => Polarity::Female,
            Polarity::Female => Polarity::Male,
        }
    }
}

/// Verb phrase joining "The person who" to a sex characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Copula {
    Is,
    Has,
    HasA,
}

impl Copula {
    pub fn as_phrase(self) -> &'static str {
        match self {
            Copula::Is => "is",
            Copula::Has => "has",
            Copula::HasA => "has a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FolkAlignment {
    Male,
    Female,
    Subversive,
}

impl FolkAlignment {
    /// The sex polarity this identifier is folk-aligned with, if any.
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            FolkAlignment::Male => Some(Polarity::Male),
            FolkAlignment::Female => Some(Polarity::Female),
            FolkAlignment::Subversive => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllnessClass {
    Mental,
    Physical,
}

impl IllnessClass {
    pub fn as_str(self) -> &'static str {
        match self {
            IllnessClass::Mental => "mental",
            IllnessClass::Physical => "physical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IllnessSource {
    #[serde(rename = "APA")]
    Apa,
    #[serde(rename = "GBD2021")]
    Gbd2021,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexCharacteristic {
    pub term: String,
    pub polarity: Polarity,
    pub copula: Copula,
    /// Term of the matched opposite-polarity characteristic.
    pub partner: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderIdentifier {
    /// Text exactly as it appears both as a completion and inside a context.
    pub term: String,
    pub folk_alignment: FolkAlignment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IllnessTerm {
    pub term: String,
    #[serde(rename = "class")]
    pub illness_class: IllnessClass,
    pub source: IllnessSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaselineNoun(pub String);

impl BaselineNoun {
    pub fn term(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexiconError {
    /// The document is not valid JSON or does not follow the lexicon layout.
    #[error("lexicon schema error: {0}")]
    Schema(String),
    /// The document parsed but breaks a count, pairing or text invariant.
    #[error("lexicon invariant violated in `{field}`: {message}")]
    Invariant { field: &'static str, message: String },
}

impl LexiconError {
    fn invariant(field: &'static str, message: String) -> Self {
        LexiconError::Invariant { field, message }
    }

    /// Name of the offending field, for schema errors this is `"document"`.
    pub fn field(&self) -> &'static str {
        match self {
            LexiconError::Schema(_) => "document",
            LexiconError::Invariant { field, .. } => field,
        }
    }
}

/// On-disk layout, deserialized before validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconDocument {
    version: String,
    sex_characteristics: Vec<SexCharacteristic>,
    gender_identifiers: Vec<GenderIdentifier>,
    illnesses: Vec<IllnessTerm>,
    baseline_nouns: Vec<BaselineNoun>,
}

/// Validated, immutable term inventory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lexicon {
    version: String,
    sex_characteristics: Vec<SexCharacteristic>,
    gender_identifiers: Vec<GenderIdentifier>,
    illnesses: Vec<IllnessTerm>,
    baseline_nouns: Vec<BaselineNoun>,
}

/// A female sex characteristic and its matched male characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedPair<'a> {
    pub female: &'a SexCharacteristic,
    pub male: &'a SexCharacteristic,
}

impl Lexicon {
    /// Parses and validates a lexicon document.
    pub fn from_json_str(source: &str) -> Result<Self, LexiconError> {
        let doc: LexiconDocument =
            serde_json::from_str(source).map_err(|e| LexiconError::Schema(e.to_string()))?;
        Self::from_document(doc)
    }

    /// The lexicon bundled with the toolkit.
    pub fn default_shipped() -> Self {
        Self::from_json_str(SHIPPED_LEXICON).expect("shipped lexicon is valid")
    }

    /// Raw text of the bundled lexicon document.
    pub fn shipped_source() -> &'static str {
        SHIPPED_LEXICON
    }

    /// Pretty-printed JSON in the same layout accepted by [`Lexicon::from_json_str`].
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    fn from_document(doc: LexiconDocument) -> Result<Self, LexiconError> {
        let lexicon = Lexicon {
            version: doc.version,
            sex_characteristics: doc.sex_characteristics,
            gender_identifiers: doc.gender_identifiers,
            illnesses: doc.illnesses,
            baseline_nouns: doc.baseline_nouns,
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    fn validate(&self) -> Result<(), LexiconError> {
        if self.version.trim().is_empty() {
            return Err(LexiconError::invariant("version", "version must not be empty".into()));
        }
        check_texts(
            "sex_characteristics",
            self.sex_characteristics.iter().map(|s| s.term.as_str()),
        )?;
        check_texts(
            "gender_identifiers",
            self.gender_identifiers.iter().map(|g| g.term.as_str()),
        )?;
        check_texts("illnesses", self.illnesses.iter().map(|i| i.term.as_str()))?;
        check_texts("baseline_nouns", self.baseline_nouns.iter().map(|n| n.term()))?;

        self.validate_sex_characteristics()?;
        self.validate_gender_identifiers()?;
        self.validate_illnesses()?;
        self.validate_baseline_nouns()
    }

    fn validate_sex_characteristics(&self) -> Result<(), LexiconError> {
        const FIELD: &str = "sex_characteristics";
        let n = self.sex_characteristics.len();
        if n != SEX_CHARACTERISTIC_COUNT {
            return Err(LexiconError::invariant(
                FIELD,
                format!("sex characteristic count {n} ≠ {SEX_CHARACTERISTIC_COUNT}"),
            ));
        }
        let males = self
            .sex_characteristics
            .iter()
            .filter(|s| s.polarity == Polarity::Male)
            .count();
        let half = SEX_CHARACTERISTIC_COUNT / 2;
        if males != half {
            return Err(LexiconError::invariant(
                FIELD,
                format!("male sex characteristic count {males} ≠ {half}"),
            ));
        }
        for s in &self.sex_characteristics {
            let partner = self.sex_characteristic(&s.partner).ok_or_else(|| {
                LexiconError::invariant(
                    FIELD,
                    format!("partner `{}` of `{}` is not a sex characteristic", s.partner, s.term),
                )
            })?;
            if partner.polarity == s.polarity {
                return Err(LexiconError::invariant(
                    FIELD,
                    format!(
                        "broken matching: `{}` is paired with `{}` of the same polarity",
                        s.term, partner.term
                    ),
                ));
            }
            if partner.partner != s.term {
                return Err(LexiconError::invariant(
                    FIELD,
                    format!(
                        "broken matching: `{}` → `{}` but `{}` → `{}`",
                        s.term, partner.term, partner.term, partner.partner
                    ),
                ));
            }
        }
        Ok(())
    }

    fn validate_gender_identifiers(&self) -> Result<(), LexiconError> {
        const FIELD: &str = "gender_identifiers";
        let n = self.gender_identifiers.len();
        if n != GENDER_IDENTIFIER_COUNT {
            return Err(LexiconError::invariant(
                FIELD,
                format!("gender identifier count {n} ≠ {GENDER_IDENTIFIER_COUNT}"),
            ));
        }
        for (alignment, expected) in [
            (FolkAlignment::Male, 1),
            (FolkAlignment::Female, 1),
            (FolkAlignment::Subversive, GENDER_IDENTIFIER_COUNT - 2),
        ] {
            let found = self
                .gender_identifiers
                .iter()
                .filter(|g| g.folk_alignment == alignment)
                .count();
            if found != expected {
                return Err(LexiconError::invariant(
                    FIELD,
                    format!("{alignment:?} folk-aligned identifier count {found} ≠ {expected}"),
                ));
            }
        }
        Ok(())
    }

    fn validate_illnesses(&self) -> Result<(), LexiconError> {
        for (class, expected) in [
            (IllnessClass::Mental, MENTAL_ILLNESS_COUNT),
            (IllnessClass::Physical, PHYSICAL_ILLNESS_COUNT),
        ] {
            let found = self
                .illnesses
                .iter()
                .filter(|i| i.illness_class == class)
                .count();
            if found != expected {
                return Err(LexiconError::invariant(
                    "illnesses",
                    format!("{} illness count {found} ≠ {expected}", class.as_str()),
                ));
            }
        }
        Ok(())
    }

    fn validate_baseline_nouns(&self) -> Result<(), LexiconError> {
        const FIELD: &str = "baseline_nouns";
        let n = self.baseline_nouns.len();
        if n != BASELINE_NOUN_COUNT {
            return Err(LexiconError::invariant(
                FIELD,
                format!("baseline noun count {n} ≠ {BASELINE_NOUN_COUNT}"),
            ));
        }
        for noun in &self.baseline_nouns {
            let len = noun.term().chars().count();
            if !(9..=13).contains(&len) {
                return Err(LexiconError::invariant(
                    FIELD,
                    format!("`{}` has {len} characters, expected 9 to 13", noun.term()),
                ));
            }
            if EXCLUDED_BASELINE_NOUNS.contains(&noun.term()) {
                return Err(LexiconError::invariant(
                    FIELD,
                    format!("`{}` is a human-related word", noun.term()),
                ));
            }
        }
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn sex_characteristics(&self) -> &[SexCharacteristic] {
        &self.sex_characteristics
    }

    pub fn gender_identifiers(&self) -> &[GenderIdentifier] {
        &self.gender_identifiers
    }

    pub fn illnesses(&self) -> &[IllnessTerm] {
        &self.illnesses
    }

    pub fn baseline_nouns(&self) -> &[BaselineNoun] {
        &self.baseline_nouns
    }

    pub fn sex_characteristic(&self, term: &str) -> Option<&SexCharacteristic> {
        self.sex_characteristics.iter().find(|s| s.term == term)
    }

    pub fn gender_identifier(&self, term: &str) -> Option<&GenderIdentifier> {
        self.gender_identifiers.iter().find(|g| g.term == term)
    }

    pub fn illness(&self, term: &str) -> Option<&IllnessTerm> {
        self.illnesses.iter().find(|i| i.term == term)
    }

    /// The matched partner of `s` (always present in a valid lexicon).
    pub fn partner(&self, s: &SexCharacteristic) -> &SexCharacteristic {
        self.sex_characteristic(&s.partner)
            .expect("partner exists in a validated lexicon")
    }

    /// The identifier every other gender is contrasted against in the
    /// gender–illness comparison: the unique male-aligned identifier.
    pub fn reference_identifier(&self) -> &GenderIdentifier {
        self.gender_identifiers
            .iter()
            .find(|g| g.folk_alignment == FolkAlignment::Male)
            .expect("validated lexicon has one male-aligned identifier")
    }

    /// Female/male matched pairs, in the lexicon order of the female terms.
    pub fn matched_pairs(&self) -> Vec<MatchedPair<'_>> {
        self.sex_characteristics
            .iter()
            .filter(|s| s.polarity == Polarity::Female)
            .map(|female| MatchedPair {
                female,
                male: self.partner(female),
            })
            .collect()
    }
}

fn check_texts<'a>(
    field: &'static str,
    terms: impl Iterator<Item = &'a str>,
) -> Result<(), LexiconError> {
    let mut seen = BTreeSet::new();
    for term in terms {
        if term.is_empty() {
            return Err(LexiconError::invariant(field, "empty term".into()));
        }
        if term.trim() != term {
            return Err(LexiconError::invariant(
                field,
                format!("`{term}` has leading or trailing whitespace"),
            ));
        }
        if !seen.insert(term) {
            return Err(LexiconError::invariant(field, format!("duplicate term `{term}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn shipped_value() -> Value {
        serde_json::from_str(SHIPPED_LEXICON).unwrap()
    }

    fn load_value(v: &Value) -> Result<Lexicon, LexiconError> {
        Lexicon::from_json_str(&serde_json::to_string(v).unwrap())
    }

    #[test]
    fn shipped_lexicon_counts() {
        let lex = Lexicon::default_shipped();
        assert_eq!(lex.sex_characteristics().len(), 10);
        assert_eq!(lex.gender_identifiers().len(), 7);
        assert_eq!(lex.illnesses().len(), 110);
        assert_eq!(lex.baseline_nouns().len(), 47);
    }

    #[test]
    fn shipped_gender_identifiers_in_order() {
        let lex = Lexicon::default_shipped();
        let terms: Vec<&str> = lex.gender_identifiers().iter().map(|g| g.term.as_str()).collect();
        assert_eq!(
            terms,
            ["a man", "a woman", "transgender", "nonbinary", "genderqueer", "genderfluid", "two-spirit"]
        );
        assert_eq!(lex.reference_identifier().term, "a man");
    }

    #[test]
    fn matched_pairs_in_lexicon_order() {
        let lex = Lexicon::default_shipped();
        let pairs: Vec<(&str, &str)> = lex
            .matched_pairs()
            .iter()
            .map(|p| (p.female.term.as_str(), p.male.term.as_str()))
            .collect();
        assert_eq!(
            pairs,
            [
                ("female", "male"),
                ("vagina", "penis"),
                ("uterus", "prostate"),
                ("estrogen", "testosterone"),
                ("XX chromosomes", "XY chromosomes"),
            ]
        );
    }

    #[test]
    fn partner_is_involutive_and_opposite() {
        let lex = Lexicon::default_shipped();
        for s in lex.sex_characteristics() {
            let p = lex.partner(s);
            assert_ne!(p.polarity, s.polarity);
            assert_eq!(lex.partner(p), s);
        }
    }

    #[test]
    fn copulas_follow_shipped_assignment() {
        let lex = Lexicon::default_shipped();
        let copula = |t: &str| lex.sex_characteristic(t).unwrap().copula;
        assert_eq!(copula("male"), Copula::Is);
        assert_eq!(copula("testosterone"), Copula::Has);
        assert_eq!(copula("XX chromosomes"), Copula::Has);
        assert_eq!(copula("penis"), Copula::HasA);
        assert_eq!(copula("uterus"), Copula::HasA);
    }

    #[test]
    fn rejects_crossed_pairing() {
        let mut v = shipped_value();
        for s in v["sex_characteristics"].as_array_mut().unwrap() {
            let term = s["term"].as_str().unwrap().to_string();
            let partner = match term.as_str() {
                "penis" => "uterus",
                "prostate" => "vagina",
                _ => continue,
            };
            s["partner"] = Value::from(partner);
        }
        let err = load_value(&v).unwrap_err();
        assert_eq!(err.field(), "sex_characteristics");
        assert!(err.to_string().contains("broken matching"), "{err}");
    }

    #[test]
    fn rejects_same_polarity_partner() {
        let mut v = shipped_value();
        v["sex_characteristics"][0]["partner"] = Value::from("penis");
        let err = load_value(&v).unwrap_err();
        assert!(err.to_string().contains("same polarity"), "{err}");
    }

    #[test]
    fn rejects_39_mental_illnesses() {
        let mut v = shipped_value();
        v["illnesses"].as_array_mut().unwrap().remove(0);
        let err = load_value(&v).unwrap_err();
        assert_eq!(err.field(), "illnesses");
        assert!(err.to_string().contains("mental illness count 39 ≠ 40"), "{err}");
    }

    #[test]
    fn rejects_46_baseline_nouns() {
        let mut v = shipped_value();
        v["baseline_nouns"].as_array_mut().unwrap().pop();
        let err = load_value(&v).unwrap_err();
        assert_eq!(err.field(), "baseline_nouns");
        assert!(err.to_string().contains("46 ≠ 47"), "{err}");
    }

    #[test]
    fn rejects_excluded_and_short_nouns() {
        let mut v = shipped_value();
        v["baseline_nouns"][0] = Value::from("bartender");
        assert!(load_value(&v).unwrap_err().to_string().contains("human-related"));
        let mut v = shipped_value();
        v["baseline_nouns"][0] = Value::from("cat");
        assert!(load_value(&v).unwrap_err().to_string().contains("3 characters"));
    }

    #[test]
    fn rejects_six_gender_identifiers() {
        let mut v = shipped_value();
        v["gender_identifiers"].as_array_mut().unwrap().pop();
        let err = load_value(&v).unwrap_err();
        assert_eq!(err.field(), "gender_identifiers");
        assert!(err.to_string().contains("6 ≠ 7"));
    }

    #[test]
    fn rejects_whitespace_and_duplicates() {
        let mut v = shipped_value();
        v["illnesses"][0]["term"] = Value::from(" depression");
        assert!(load_value(&v).unwrap_err().to_string().contains("whitespace"));
        let mut v = shipped_value();
        v["illnesses"][1]["term"] = Value::from("depression");
        assert!(load_value(&v).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(Lexicon::from_json_str("{"), Err(LexiconError::Schema(_))));
        let mut v = shipped_value();
        v["sex_characteristics"][0]["polarity"] = Value::from("unknown");
        assert!(matches!(load_value(&v), Err(LexiconError::Schema(_))));
        let mut v = shipped_value();
        v.as_object_mut().unwrap().remove("version");
        assert!(matches!(load_value(&v), Err(LexiconError::Schema(_))));
    }

    #[test]
    fn round_trip() {
        let lex = Lexicon::default_shipped();
        let again = Lexicon::from_json_str(&lex.to_json_string()).unwrap();
        assert_eq!(lex, again);
    }
}
