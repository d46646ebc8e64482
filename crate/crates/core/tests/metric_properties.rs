mod common;

use common::*;
use genderprobe_core::lexicon::Lexicon;
use genderprobe_core::metrics::{
    folk_subversive_lpr, gender_illness_against, gender_illness_lpr, sex_gender_lpr, MetricError,
};
use genderprobe_core::{ScoreIndex, Suite};
use proptest::prelude::*;

const SUITES: [Suite; 2] = [Suite::SexGender, Suite::GenderIllness];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_match_formula_oracles(seed in any::<u64>()) {
        let lex = Lexicon::default_shipped();
        let table = random_table(&lex, &SUITES, seed);
        let recs = score_table(&lex, &table);
        let idx = ScoreIndex::new(&recs).unwrap();

        let folk = folk_subversive_lpr(&idx, &lex, None).unwrap();
        prop_assert!(close(folk.value, oracle_folk(&table, &GENDERS), 1e-9));
        prop_assert_eq!(folk.recompute().to_bits(), folk.value.to_bits());

        for g in lex.gender_identifiers() {
            for pair in lex.matched_pairs() {
                let m = sex_gender_lpr(&idx, g, pair).unwrap();
                let o = oracle_sex_gender(&table, &g.term, &pair.female.term, &pair.male.term);
                prop_assert!(close(m.value, o, 1e-9));
                prop_assert_eq!(m.recompute().to_bits(), m.value.to_bits());
            }
        }
        for g in lex.gender_identifiers().iter().skip(1) {
            for i in lex.illnesses() {
                let m = gender_illness_lpr(&idx, &lex, g, i).unwrap();
                prop_assert!(close(m.value, oracle_gender_illness(&table, &g.term, &i.term), 1e-9));
            }
        }
    }

    #[test]
    fn subset_folk_matches_oracle(seed in any::<u64>(), mask in 1u8..128) {
        let lex = Lexicon::default_shipped();
        let table = random_table(&lex, &[Suite::SexGender], seed);
        let recs = score_table(&lex, &table);
        let idx = ScoreIndex::new(&recs).unwrap();
        let chosen: Vec<&str> = GENDERS.iter().enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, g)| *g)
            .collect();
        let subset: Vec<String> = chosen.iter().map(|s| s.to_string()).collect();
        let m = folk_subversive_lpr(&idx, &lex, Some(&subset)).unwrap();
        prop_assert_eq!(m.components.len(), 10 * chosen.len());
        prop_assert!(close(m.value, oracle_folk(&table, &chosen), 1e-9));
    }

    #[test]
    fn antisymmetry(seed in any::<u64>()) {
        let lex = Lexicon::default_shipped();
        let table = random_table(&lex, &SUITES, seed);
        let recs = score_table(&lex, &table);
        let idx = ScoreIndex::new(&recs).unwrap();
        for g in lex.gender_identifiers() {
            for pair in lex.matched_pairs() {
                let mut swapped = pair;
                std::mem::swap(&mut swapped.female, &mut swapped.male);
                let a = sex_gender_lpr(&idx, g, pair).unwrap().value;
                let b = sex_gender_lpr(&idx, g, swapped).unwrap().value;
                prop_assert_eq!(a, -b);
            }
        }
        let man = lex.reference_identifier();
        for g in lex.gender_identifiers().iter().skip(1) {
            for i in lex.illnesses().iter().step_by(7) {
                let a = gender_illness_against(&idx, g, man, i).unwrap().value;
                let b = gender_illness_against(&idx, man, g, i).unwrap().value;
                prop_assert_eq!(a, -b);
            }
        }
    }

    #[test]
    fn scale_invariance(seed in any::<u64>(), log_c in -6.0f64..0.0) {
        let lex = Lexicon::default_shipped();
        let table = random_table(&lex, &SUITES, seed);
        let c = 10f64.powf(log_c);
        let mut scaled = table.clone();
        for p in scaled.cells.values_mut() {
            *p *= c;
        }
        let (r1, r2) = (score_table(&lex, &table), score_table(&lex, &scaled));
        let (i1, i2) = (ScoreIndex::new(&r1).unwrap(), ScoreIndex::new(&r2).unwrap());
        for g in lex.gender_identifiers() {
            for pair in lex.matched_pairs() {
                let a = sex_gender_lpr(&i1, g, pair).unwrap().value;
                let b = sex_gender_lpr(&i2, g, pair).unwrap().value;
                prop_assert!(close(a, b, 1e-9));
            }
        }
        for g in lex.gender_identifiers().iter().skip(1) {
            for i in lex.illnesses() {
                let a = gender_illness_lpr(&i1, &lex, g, i).unwrap().value;
                let b = gender_illness_lpr(&i2, &lex, g, i).unwrap().value;
                prop_assert!(close(a, b, 1e-9));
            }
        }
    }

    #[test]
    fn folk_monotonicity(seed in any::<u64>(), cell in 0usize..70, factor in 1.01f64..50.0) {
        let lex = Lexicon::default_shipped();
        let mut table = random_table(&lex, &[Suite::SexGender], seed);
        let s = &lex.sex_characteristics()[cell / 7];
        let g = &lex.gender_identifiers()[cell % 7];
        // keep the raised probability inside (0, 1]
        let p0 = table.p(Suite::SexGender, &s.term, &g.term).min(1.0 / factor);
        table.set(Suite::SexGender, &s.term, &g.term, p0);
        let before = {
            let r = score_table(&lex, &table);
            folk_subversive_lpr(&ScoreIndex::new(&r).unwrap(), &lex, None).unwrap().value
        };
        table.set(Suite::SexGender, &s.term, &g.term, p0 * factor);
        let after = {
            let r = score_table(&lex, &table);
            folk_subversive_lpr(&ScoreIndex::new(&r).unwrap(), &lex, None).unwrap().value
        };
        let aligned = g.folk_alignment.polarity() == Some(s.polarity);
        if aligned {
            prop_assert!(after > before);
        } else {
            prop_assert!(after < before);
        }
    }
}

#[test]
fn uniform_e_minus_one_is_fifty_sevenths() {
    let lex = Lexicon::default_shipped();
    let table = uniform_table(&lex, &[Suite::SexGender], (-1.0f64).exp());
    let recs = score_table(&lex, &table);
    let idx = ScoreIndex::new(&recs).unwrap();
    let m = folk_subversive_lpr(&idx, &lex, None).unwrap();
    assert!((m.value - 50.0 / 7.0).abs() < 1e-9);
    assert_eq!(m.components.len(), 70);
    assert_eq!(m.components.iter().filter(|c| c.weight > 0.0).count(), 10);
}

#[test]
fn missing_cell_is_named() {
    let lex = Lexicon::default_shipped();
    let mut table = uniform_table(&lex, &[Suite::SexGender], 0.5);
    table.cells.remove(&(Suite::SexGender, "uterus".into(), "two-spirit".into()));
    let recs = score_table(&lex, &table);
    let idx = ScoreIndex::new(&recs).unwrap();
    match folk_subversive_lpr(&idx, &lex, None) {
        Err(MetricError::MissingScore(msg)) => {
            assert!(msg.contains("uterus") && msg.contains("two-spirit"), "{msg}");
        }
        other => panic!("expected missing score, got {other:?}"),
    }
}
