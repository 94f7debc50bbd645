//! Maximum-likelihood training with Adam and global-norm gradient clipping.

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{grad, LMParams, Scalar};
use crate::error::{Error, Result};
use crate::rng;
use crate::textcodec::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 50,
            learning_rate: 3e-4,
            seed: 0,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch_size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.grad_clip > 0.0) {
            return Err(Error::InvalidArgument("learning_rate and grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// A training corpus that may present different sequences on each epoch (for
/// instance, freshly permuted sentences).
pub trait CorpusSource {
    fn size(&self) -> usize;
    fn epoch_sequences(&self, epoch: usize) -> Vec<TokenSeq>;
}

impl CorpusSource for [TokenSeq] {
    fn size(&self) -> usize {
        self.len()
    }

    fn epoch_sequences(&self, _epoch: usize) -> Vec<TokenSeq> {
        self.to_vec()
    }
}

impl CorpusSource for Vec<TokenSeq> {
    fn size(&self) -> usize {
        self.len()
    }

    fn epoch_sequences(&self, _epoch: usize) -> Vec<TokenSeq> {
        self.clone()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<F> {
    pub params: LMParams<F>,
    /// Mean next-token NLL per epoch, measured on each batch before its update.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    fn new(params: &LMParams<F>) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![F::zero(); t.len()]).collect();
        Adam {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn update(&mut self, params: &mut LMParams<F>, g: &LMParams<F>, lr: f64) {
        self.t += 1;
        let step = lr * (1.0 - BETA2.powi(self.t)).sqrt() / (1.0 - BETA1.powi(self.t));
        let (b1, b2, eps, step) = (F::of(BETA1), F::of(BETA2), F::of(ADAM_EPS), F::of(step));
        let one = F::one();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(g.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

fn clip_global_norm<F: Scalar>(g: &mut LMParams<F>, max_norm: f64) {
    let norm = g
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|x| x.f64() * x.f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = F::of(max_norm / norm);
        for t in g.tensors_mut() {
            for x in t.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// Runs `epochs * ceil(|corpus| / batch_size)` optimizer steps. Corpus order is
/// reshuffled every epoch from `tcfg.seed`.
pub fn train<F: Scalar, C: CorpusSource + ?Sized>(
    params: LMParams<F>,
    corpus: &C,
    tcfg: &TrainConfig,
) -> Result<TrainReport<F>> {
    tcfg.validate()?;
    if corpus.size() == 0 {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let mut params = params;
    let mut adam = Adam::new(&params);
    let mut rng = rng::stream(rng::derive_seed(tcfg.seed, "train-order"));
    let mut epoch_losses = Vec::with_capacity(tcfg.epochs);
    let mut steps = 0;
    for epoch in 0..tcfg.epochs {
        let seqs = corpus.epoch_sequences(epoch);
        if let Some(long) = seqs.iter().find(|s| s.len() > params.config.max_len) {
            return Err(Error::SequenceTooLong {
                len: long.len(),
                max_len: params.config.max_len,
            });
        }
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut positions = 0usize;
        for chunk in order.chunks(tcfg.batch_size) {
            let batch: Vec<&[usize]> = chunk.iter().map(|&i| &seqs[i][..]).collect();
            let (loss, mut g) = grad(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let count: usize = batch.iter().map(|s| s.len() - 1).sum();
            total += loss * count as f64;
            positions += count;
            clip_global_norm(&mut g, tcfg.grad_clip);
            adam.update(&mut params, &g, tcfg.learning_rate);
            steps += 1;
        }
        let mean = total / positions as f64;
        info!("epoch {}/{}: mean nll {:.4}", epoch + 1, tcfg.epochs, mean);
        epoch_losses.push(mean);
    }
    if !params.all_finite() {
        return Err(Error::Diverged { epoch: tcfg.epochs });
    }
    Ok(TrainReport {
        params,
        epoch_losses,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_params, nll_loss, LMConfig};

    fn cfg() -> LMConfig {
        LMConfig {
            vocab_size: 12,
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_k: 8,
            d_ff: 32,
            max_len: 16,
        }
    }

    fn corpus() -> Vec<TokenSeq> {
        vec![
            TokenSeq::new(vec![0, 4, 5, 6, 7, 1]),
            TokenSeq::new(vec![0, 8, 9, 10, 11, 1]),
        ]
    }

    #[test]
    fn loss_decreases_over_first_steps() {
        let tcfg = TrainConfig {
            batch_size: 2,
            epochs: 10,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let p = init_params::<f32>(cfg(), 0).unwrap();
        let report = train(p, &corpus(), &tcfg).unwrap();
        assert_eq!(report.steps, 10);
        for w in report.epoch_losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", report.epoch_losses);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let tcfg = TrainConfig {
            batch_size: 1,
            epochs: 3,
            ..TrainConfig::default()
        };
        let run = || train(init_params::<f32>(cfg(), 1).unwrap(), &corpus(), &tcfg).unwrap().params;
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_config_and_empty_corpus() {
        let p = init_params::<f32>(cfg(), 0).unwrap();
        let zero_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(p.clone(), &corpus(), &zero_epochs).is_err());
        assert!(train(p.clone(), &Vec::<TokenSeq>::new(), &TrainConfig::default()).is_err());
        let long = vec![TokenSeq::new(vec![0; 17])];
        assert!(matches!(
            train(p.clone(), &long, &TrainConfig::default()),
            Err(Error::SequenceTooLong { .. })
        ));
        assert!(nll_loss(&p, &corpus()).unwrap().is_finite());
    }
}
