//! Temperature sampling with optional logit masking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::step;
use super::{KvCache, LMParams, Scalar};
use crate::error::{Error, Result};
use crate::textcodec::{TokenId, TokenSeq};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    /// Tokens that may ever be sampled; `None` allows the whole vocabulary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_mask: Option<Vec<TokenId>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            temperature: 0.7,
            allowed_mask: None,
        }
    }
}

impl SamplerConfig {
    pub fn with_temperature(temperature: f64) -> Self {
        SamplerConfig {
            temperature,
            allowed_mask: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// `softmax(z / T)` restricted to the tokens allowed by both `step_mask` and
/// the configured mask; everything else gets probability exactly 0.
pub(crate) fn masked_distribution<F: Scalar>(
    logits: &[F],
    scfg: &SamplerConfig,
    step_mask: Option<&[TokenId]>,
) -> Result<Vec<f64>> {
    scfg.validate()?;
    let v = logits.len();
    let mut allowed = vec![step_mask.is_none(); v];
    if let Some(mask) = step_mask {
        for &t in mask.iter().filter(|&&t| t < v) {
            allowed[t] = true;
        }
    }
    if let Some(mask) = &scfg.allowed_mask {
        let mut keep = vec![false; v];
        for &t in mask.iter().filter(|&&t| t < v) {
            keep[t] = true;
        }
        for (a, k) in allowed.iter_mut().zip(keep) {
            *a &= k;
        }
    }
    if !allowed.iter().any(|&a| a) {
        return Err(Error::InvalidArgument("no token is allowed at this step".into()));
    }
    let t = scfg.temperature;
    let max = logits
        .iter()
        .zip(&allowed)
        .filter(|(_, &a)| a)
        .map(|(z, _)| z.f64() / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(&allowed)
        .map(|(z, &a)| if a { (z.f64() / t - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Ok(probs)
}

/// Shannon entropy in nats.
pub fn shannon_entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}

fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Next-token distribution after `prefix`.
pub fn next_token_dist<F: Scalar>(params: &LMParams<F>, prefix: &[TokenId], scfg: &SamplerConfig) -> Result<Vec<f64>> {
    if prefix.is_empty() {
        return Err(Error::InvalidArgument("prefix must be non-empty".into()));
    }
    let mut dec = Decoder::new(params);
    dec.feed_all(prefix)?;
    dec.distribution(scfg, None)
}

/// Incremental decoder over a key/value cache.
pub struct Decoder<'a, F: Scalar> {
    params: &'a LMParams<F>,
    cache: KvCache<F>,
    tokens: Vec<TokenId>,
    logits: Option<Vec<F>>,
}

impl<'a, F: Scalar> Decoder<'a, F> {
    pub fn new(params: &'a LMParams<F>) -> Self {
        Decoder {
            params,
            cache: KvCache::new(params),
            tokens: Vec::new(),
            logits: None,
        }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn feed(&mut self, token: TokenId) -> Result<()> {
        let c = &self.params.config;
        if token >= c.vocab_size {
            return Err(Error::InvalidArgument(format!("token id {token} outside vocabulary")));
        }
        if self.tokens.len() >= c.max_len {
            return Err(Error::SequenceTooLong {
                len: self.tokens.len() + 1,
                max_len: c.max_len,
            });
        }
        self.logits = Some(step(self.params, token, &mut self.cache).logits);
        self.tokens.push(token);
        Ok(())
    }

    pub fn feed_all(&mut self, tokens: &[TokenId]) -> Result<()> {
        tokens.iter().try_for_each(|&t| self.feed(t))
    }

    /// Whether another token can be fed without exceeding `max_len`.
    pub fn has_room(&self) -> bool {
        self.tokens.len() < self.params.config.max_len
    }

    pub fn distribution(&self, scfg: &SamplerConfig, step_mask: Option<&[TokenId]>) -> Result<Vec<f64>> {
        let logits = self
            .logits
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("decoder has not been fed a prefix".into()))?;
        masked_distribution(logits, scfg, step_mask)
    }

    /// Draws the next token from `probs` and feeds it.
    pub fn sample_from<R: Rng + ?Sized>(&mut self, probs: &[f64], rng: &mut R) -> Result<TokenId> {
        let t = draw(probs, rng);
        self.feed(t)?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOutput {
    /// Prompt followed by the generated tokens.
    pub tokens: TokenSeq,
    /// True when generation stopped at `max_steps` (or `max_len`) without EOS.
    pub truncated: bool,
}

/// Extends `prompt` token by token until `eos` is drawn or `max_steps` tokens
/// have been generated. `step_mask` sees the sequence so far and returns the
/// allowed set for the next token (`None` for unrestricted).
pub fn sample_sequence<F, R, M>(
    params: &LMParams<F>,
    prompt: &[TokenId],
    scfg: &SamplerConfig,
    mut step_mask: M,
    eos: TokenId,
    rng: &mut R,
    max_steps: usize,
) -> Result<SampleOutput>
where
    F: Scalar,
    R: Rng + ?Sized,
    M: FnMut(&[TokenId]) -> Option<Vec<TokenId>>,
{
    if prompt.is_empty() {
        return Err(Error::InvalidArgument("prompt must be non-empty".into()));
    }
    let mut dec = Decoder::new(params);
    dec.feed_all(prompt)?;
    for _ in 0..max_steps {
        if !dec.has_room() {
            break;
        }
        let mask = step_mask(dec.tokens());
        let probs = dec.distribution(scfg, mask.as_deref())?;
        if dec.sample_from(&probs, rng)? == eos {
            return Ok(SampleOutput {
                tokens: TokenSeq::new(dec.tokens),
                truncated: false,
            });
        }
    }
    Ok(SampleOutput {
        tokens: TokenSeq::new(dec.tokens),
        truncated: true,
    })
}
