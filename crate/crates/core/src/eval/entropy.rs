//! Entropy diagnostics of the generative process.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{Schema, Table, Value};
use crate::error::{Error, Result};
use crate::lm::{shannon_entropy, Decoder, LMParams, SamplerConfig};
use crate::oversample::grammar_after;
use crate::rng;
use crate::textcodec::{TokenSeq, Vocab};

/// Next-token entropies (nats) observed while decoding from prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntropy {
    /// Mean over every generated step of every prompt.
    pub mean_per_step_entropy: f64,
    /// Mean over prompts of the entropy at the first field-name position.
    pub first_field_entropy: f64,
    pub steps: usize,
}

/// Runs constrained generation from each prompt, recording the entropy of the
/// masked, temperature-scaled next-token distribution at every step. Prompt
/// `i` samples from the stream `(seed, i)`.
pub fn per_step_entropy(
    params: &LMParams<f32>,
    prompts: &[TokenSeq],
    scfg: &SamplerConfig,
    vocab: &Vocab,
    seed: u64,
) -> Result<StepEntropy> {
    if prompts.is_empty() {
        return Err(Error::InvalidArgument("need at least one prompt".into()));
    }
    let mut total = 0.0;
    let mut steps = 0;
    let mut first_total = 0.0;
    let mut firsts = 0;
    for (i, prompt) in prompts.iter().enumerate() {
        let mut r = rng::substream(seed, i as u64);
        let mut g = grammar_after(prompt, vocab)?;
        let mut dec = Decoder::new(params);
        dec.feed_all(prompt)?;
        let mut first_seen = false;
        while !g.is_done() && dec.has_room() {
            let allowed = g.allowed(vocab);
            let probs = dec.distribution(scfg, Some(&allowed))?;
            let h = shannon_entropy(&probs);
            total += h;
            steps += 1;
            if !first_seen && g.at_field_start() {
                first_total += h;
                firsts += 1;
                first_seen = true;
            }
            let t = dec.sample_from(&probs, &mut r)?;
            g.advance(vocab, t).expect("sampled token is allowed");
        }
    }
    Ok(StepEntropy {
        mean_per_step_entropy: if steps > 0 { total / steps as f64 } else { 0.0 },
        first_field_entropy: if firsts > 0 { first_total / firsts as f64 } else { 0.0 },
        steps,
    })
}

pub const ENTROPY_BINS: usize = 10;

/// Maps rows to joint symbols: categorical values by declared index,
/// continuous values by equal-width bin over a reference range.
#[derive(Debug, Clone)]
pub struct Discretizer {
    ranges: Vec<Option<(f64, f64)>>,
    bins: usize,
}

impl Discretizer {
    /// Bins fit on the continuous ranges of `reference`.
    pub fn fit(reference: &Table, bins: usize) -> Result<Self> {
        if reference.is_empty() || bins == 0 {
            return Err(Error::Degenerate("discretizer needs rows and at least one bin".into()));
        }
        let ranges = reference
            .schema()
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.is_continuous().then(|| {
                    reference
                        .rows()
                        .iter()
                        .filter_map(|r| r.values[j].as_num())
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
                })
            })
            .collect();
        Ok(Discretizer { ranges, bins })
    }

    pub fn symbol(&self, values: &[Value], schema: &Schema) -> Vec<usize> {
        values
            .iter()
            .zip(&self.ranges)
            .zip(&schema.features)
            .map(|((v, range), spec)| match (v, range) {
                (Value::Num(x), Some((lo, hi))) => {
                    let span = hi - lo;
                    let b = if span > 0.0 { ((x - lo) / span * self.bins as f64).floor() } else { 0.0 };
                    (b.max(0.0) as usize).min(self.bins - 1)
                }
                (Value::Cat(c), None) => spec.category_index(c).expect("validated category"),
                _ => panic!("row does not match the discretizer schema"),
            })
            .collect()
    }
}

/// Plug-in Shannon entropy (nats) of the empirical distribution of symbols.
pub fn plug_in_entropy<T: std::hash::Hash + Eq>(symbols: impl IntoIterator<Item = T>) -> f64 {
    let mut counts: HashMap<T, usize> = HashMap::new();
    let mut n = 0usize;
    for s in symbols {
        *counts.entry(s).or_insert(0) += 1;
        n += 1;
    }
    let probs: Vec<f64> = counts.values().map(|&c| c as f64 / n as f64).collect();
    shannon_entropy(&probs)
}

/// Entropy of the discretized rows of `samples`, each row one joint symbol.
pub fn sample_set_entropy(samples: &Table, discretizer: &Discretizer) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Degenerate("sample-set entropy of an empty table".into()));
    }
    let schema = samples.schema();
    Ok(plug_in_entropy(samples.rows().iter().map(|r| discretizer.symbol(&r.values, schema))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_fixture, FeatureSpec, Row, TargetSpec};
    use crate::lm::{init_params, LMConfig};
    use crate::oversample::{build_prompt, ConditionStrategy};

    #[test]
    fn plug_in_cases() {
        assert_eq!(plug_in_entropy([7, 7, 7]), 0.0);
        assert!((plug_in_entropy(0..5) - 5f64.ln()).abs() < 1e-12);
        let h = plug_in_entropy([1, 1, 2, 3]);
        assert!((h - 1.0397207708399179).abs() < 1e-12);
    }

    #[test]
    fn sample_set_entropy_of_identical_rows_is_zero() {
        let t = generate_fixture(10, 10, 2, 1, 0);
        let d = Discretizer::fit(&t, ENTROPY_BINS).unwrap();
        let same = Table::new(t.schema().clone(), vec![t.rows()[0].clone(); 5]).unwrap();
        assert_eq!(sample_set_entropy(&same, &d).unwrap(), 0.0);
        let h = sample_set_entropy(&t, &d).unwrap();
        assert!(h > 0.0 && h <= (t.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn forced_grammar_has_zero_entropy() {
        let schema = Schema::new(
            vec![FeatureSpec::categorical("only", ["x"])],
            TargetSpec::new("y", ["a", "b"], "b"),
        )
        .unwrap();
        let vocab = Vocab::build(&schema);
        let t = Table::new(schema.clone(), vec![Row::new(vec![Value::Cat("x".into())], "b")]).unwrap();
        let lm = LMConfig {
            d_model: 8,
            n_heads: 2,
            d_k: 4,
            d_ff: 8,
            n_layers: 1,
            max_len: 16,
            vocab_size: vocab.len(),
        };
        let p = init_params::<f32>(lm, 0).unwrap();
        let prompt = build_prompt(ConditionStrategy::ConditionY, &schema, &t, &vocab, &mut rng::stream(0)).unwrap();
        let e = per_step_entropy(&p, &[prompt], &SamplerConfig::default(), &vocab, 0).unwrap();
        assert_eq!(e.mean_per_step_entropy, 0.0);
        assert_eq!(e.steps, 5);
    }

    #[test]
    fn entropies_are_bounded_and_grow_with_temperature() {
        let t = generate_fixture(10, 20, 3, 2, 1);
        let minor = t.filter_label("minor");
        let vocab = Vocab::build(t.schema());
        let lm = LMConfig {
            d_model: 16,
            n_heads: 2,
            d_k: 8,
            d_ff: 16,
            n_layers: 1,
            ..LMConfig::default()
        }
        .with_vocab(vocab.len());
        let p = init_params::<f32>(lm, 3).unwrap();
        let mut r = rng::stream(4);
        let prompts: Vec<TokenSeq> = (0..10)
            .map(|_| build_prompt(ConditionStrategy::ConditionY, t.schema(), &minor, &vocab, &mut r).unwrap())
            .collect();
        let e = per_step_entropy(&p, &prompts, &SamplerConfig::default(), &vocab, 0).unwrap();
        assert!(e.mean_per_step_entropy >= 0.0 && e.mean_per_step_entropy <= (vocab.len() as f64).ln());
        assert!(e.first_field_entropy <= 5f64.ln() + 1e-12);
        assert!(e.first_field_entropy > 0.0);
        // Pointwise over the first step (the forced separator is step 0, so use
        // the field-name step).
        let cold = per_step_entropy(&p, &prompts[..1], &SamplerConfig::with_temperature(0.1), &vocab, 0).unwrap();
        let hot = per_step_entropy(&p, &prompts[..1], &SamplerConfig::with_temperature(2.0), &vocab, 0).unwrap();
        assert!(cold.first_field_entropy <= hot.first_field_entropy);
    }
}
