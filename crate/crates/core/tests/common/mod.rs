#![allow(dead_code)]

use std::collections::BTreeMap;

use genderprobe_core::mock::MockScorer;
use genderprobe_core::probes::generate_suite;
use genderprobe_core::scoring::{score_batch, MemoryStore};
use genderprobe_core::{Lexicon, ScoreRecord, Suite};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MALE_SEX: [&str; 5] = ["male", "penis", "prostate", "testosterone", "XY chromosomes"];
pub const FEMALE_SEX: [&str; 5] = ["female", "vagina", "uterus", "estrogen", "XX chromosomes"];
pub const GENDERS: [&str; 7] = [
    "a man",
    "a woman",
    "transgender",
    "nonbinary",
    "genderqueer",
    "genderfluid",
    "two-spirit",
];

/// Probability per (context key, completion key) for each suite.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub cells: BTreeMap<(Suite, String, String), f64>,
}

impl Table {
    pub fn p(&self, suite: Suite, context: &str, completion: &str) -> f64 {
        self.cells[&(suite, context.to_string(), completion.to_string())]
    }

    pub fn set(&mut self, suite: Suite, context: &str, completion: &str, p: f64) {
        self.cells.insert((suite, context.into(), completion.into()), p);
    }
}

pub fn random_table(lexicon: &Lexicon, suites: &[Suite], seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Table::default();
    for &suite in suites {
        for probe in generate_suite(lexicon, suite) {
            // log-uniform over [1e-12, 1]
            let p = 10f64.powf(-12.0 * rng.gen::<f64>());
            table.set(suite, &probe.context_key, &probe.completion_key, p);
        }
    }
    table
}

pub fn uniform_table(lexicon: &Lexicon, suites: &[Suite], p: f64) -> Table {
    let mut table = Table::default();
    for &suite in suites {
        for probe in generate_suite(lexicon, suite) {
            table.set(suite, &probe.context_key, &probe.completion_key, p);
        }
    }
    table
}

/// Scores every cell of `table` through a mock scorer and the batch driver.
pub fn score_table(lexicon: &Lexicon, table: &Table) -> Vec<ScoreRecord> {
    let mut builder = MockScorer::builder().model_id("mock-oracle");
    let mut probes = Vec::new();
    for suite in Suite::ALL {
        for probe in generate_suite(lexicon, suite) {
            let key = (suite, probe.context_key.clone(), probe.completion_key.clone());
            if let Some(&p) = table.cells.get(&key) {
                builder = builder.joint(&probe.context_text, &probe.completion_text, p);
                probes.push(probe);
            }
        }
    }
    let mut scorer = builder.build().expect("valid probabilities");
    let mut store = MemoryStore::new();
    score_batch(&mut scorer, &probes, &mut store).expect("mock scoring succeeds")
}

// Straight-from-the-formula evaluations. They read only the table and the
// hard-coded term sets above, never the metric code.

pub fn oracle_folk(table: &Table, genders: &[&str]) -> f64 {
    let mut sum = 0.0;
    for g in genders {
        for s in MALE_SEX.iter().chain(FEMALE_SEX.iter()) {
            let folk = (*g == "a man" && MALE_SEX.contains(s)) || (*g == "a woman" && FEMALE_SEX.contains(s));
            let delta = if folk { 1.0 } else { -1.0 };
            sum += delta * table.p(Suite::SexGender, s, g).ln();
        }
    }
    sum / genders.len() as f64
}

pub fn oracle_sex_gender(table: &Table, g: &str, female: &str, male: &str) -> f64 {
    table.p(Suite::SexGender, female, g).ln() - table.p(Suite::SexGender, male, g).ln()
}

pub fn oracle_gender_illness(table: &Table, g: &str, illness: &str) -> f64 {
    table.p(Suite::GenderIllness, g, illness).ln() - table.p(Suite::GenderIllness, "a man", illness).ln()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
