//! Synthetic CI dataset with a documented class-separation rule.
//!
//! Features are `con0..con{m_con-1}` (continuous) followed by
//! `cat0..cat{m_cat-1}` (categorical, categories `A`, `B`, `C`); the target is
//! `label` with labels `major` and `minor` (`minor` is the minority label).
//!
//! Continuous feature `j` is `offset_j + scale_j * z` where `z ~ N(0, 1)` for
//! majority rows and `z ~ N(±1.2, 1)` for minority rows (`+` for even `j`, `-`
//! for odd `j`). Categorical features draw `A/B/C` with probabilities
//! `0.6/0.3/0.1` for majority rows and `0.15/0.35/0.5` for minority rows.
//! The Bayes rule (log-likelihood ratio) therefore separates the labels well
//! above chance, but the classes overlap. Continuous values are rounded to 4
//! significant digits so that they survive text serialization exactly.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{FeatureSpec, Row, Schema, TargetSpec, Table, Value};
use crate::rng;
use crate::textcodec::format_number;

pub const FIXTURE_CATEGORIES: [&str; 3] = ["A", "B", "C"];
pub const MINORITY_SHIFT: f64 = 1.2;
const OFFSETS: [f64; 4] = [0.0, 40.0, 2.0, -10.0];
const SCALES: [f64; 4] = [1.0, 10.0, 0.5, 5.0];
const MAJOR_CAT_PROBS: [f64; 3] = [0.6, 0.3, 0.1];
const MINOR_CAT_PROBS: [f64; 3] = [0.15, 0.35, 0.5];

pub fn fixture_schema(m_con: usize, m_cat: usize) -> Schema {
    let mut features: Vec<FeatureSpec> = (0..m_con).map(|j| FeatureSpec::continuous(format!("con{j}"))).collect();
    features.extend((0..m_cat).map(|j| FeatureSpec::categorical(format!("cat{j}"), FIXTURE_CATEGORIES)));
    Schema::new(features, TargetSpec::new("label", ["major", "minor"], "minor"))
        .expect("fixture schema is valid")
}

/// Deterministic labelled fixture of `n_major + n_minor` rows (shuffled).
pub fn generate_fixture(n_major: usize, n_minor: usize, m_con: usize, m_cat: usize, seed: u64) -> Table {
    let schema = fixture_schema(m_con, m_cat);
    let mut rng = rng::stream(seed);
    let mut rows = Vec::with_capacity(n_major + n_minor);
    for (count, minority) in [(n_major, false), (n_minor, true)] {
        for _ in 0..count {
            let mut values = Vec::with_capacity(m_con + m_cat);
            for j in 0..m_con {
                let z: f64 = rng.sample(StandardNormal);
                let shift = match (minority, j % 2) {
                    (false, _) => 0.0,
                    (true, 0) => MINORITY_SHIFT,
                    (true, _) => -MINORITY_SHIFT,
                };
                let x = OFFSETS[j % 4] + SCALES[j % 4] * (z + shift);
                let quantized: f64 = format_number(x, 4)
                    .expect("finite")
                    .parse()
                    .expect("canonical decimal parses");
                values.push(Value::Num(quantized));
            }
            let probs = if minority { MINOR_CAT_PROBS } else { MAJOR_CAT_PROBS };
            for _ in 0..m_cat {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = FIXTURE_CATEGORIES.len() - 1;
                for (c, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                values.push(Value::Cat(FIXTURE_CATEGORIES[pick].to_string()));
            }
            rows.push(Row::new(values, if minority { "minor" } else { "major" }));
        }
    }
    rows.shuffle(&mut rng);
    Table::from_trusted(schema, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::class_counts;

    #[test]
    fn size_and_counts() {
        let t = generate_fixture(400, 100, 4, 2, 7);
        assert_eq!(t.len(), 500);
        assert_eq!(t.schema().n_features(), 6);
        let c = class_counts(&t);
        assert_eq!(c["major"], 400);
        assert_eq!(c["minor"], 100);
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(generate_fixture(30, 10, 2, 1, 5), generate_fixture(30, 10, 2, 1, 5));
        assert_ne!(generate_fixture(30, 10, 2, 1, 5), generate_fixture(30, 10, 2, 1, 6));
    }

    #[test]
    fn bayes_rule_beats_chance() {
        let t = generate_fixture(400, 400, 4, 2, 11);
        let mut correct = 0;
        for row in t.rows() {
            let mut llr = 0.0;
            for j in 0..4 {
                let z = (row.values[j].as_num().unwrap() - OFFSETS[j]) / SCALES[j];
                let mu = if j % 2 == 0 { MINORITY_SHIFT } else { -MINORITY_SHIFT };
                llr += -0.5 * (z - mu).powi(2) + 0.5 * z * z;
            }
            for j in 4..6 {
                let c = FIXTURE_CATEGORIES
                    .iter()
                    .position(|k| Some(*k) == row.values[j].as_cat())
                    .unwrap();
                llr += (MINOR_CAT_PROBS[c] / MAJOR_CAT_PROBS[c]).ln();
            }
            if (llr > 0.0) == (row.label == "minor") {
                correct += 1;
            }
        }
        assert!(correct as f64 / t.len() as f64 > 0.8, "accuracy {correct}/800");
    }
}
