//! Prompting a fine-tuned model for synthetic minority rows.

use rand::Rng;

use super::{ConditionStrategy, DecodeMode, OversampleConfig};
use crate::data::{Row, Schema, Table, Value};
use crate::error::{Error, Result};
use crate::lm::{sample_sequence, LMParams, SamplerConfig};
use crate::rng;
use crate::textcodec::{decode_to_row, encode_field, format_number, Field, GrammarState, TokenId, TokenSeq, Vocab, BOS, DEFAULT_MAX_VALUE_CHARS};

/// `Y is y_minor` for `condition_y`; `Y is y_minor, X_i is v_i` for
/// `condition_yx`, with `X_i` uniform over the features and `v_i` the value of
/// a uniformly drawn minority row. No EOS is appended.
pub fn build_prompt<R: Rng + ?Sized>(
    condition: ConditionStrategy,
    schema: &Schema,
    minor: &Table,
    vocab: &Vocab,
    rng: &mut R,
) -> Result<TokenSeq> {
    let mut ids = vec![BOS];
    encode_field(&Field::new(&schema.target.name, schema.minority_label()), vocab, &mut ids)?;
    if condition == ConditionStrategy::ConditionYx {
        if minor.is_empty() {
            return Err(Error::Degenerate("condition_yx prompts need minority rows".into()));
        }
        let j = rng.random_range(0..schema.n_features());
        let row = &minor.rows()[rng.random_range(0..minor.len())];
        let text = match &row.values[j] {
            Value::Num(x) => format_number(*x, 4)?,
            Value::Cat(c) => c.clone(),
        };
        ids.push(vocab.sep());
        encode_field(&Field::new(&schema.features[j].name, text), vocab, &mut ids)?;
    }
    Ok(TokenSeq::new(ids))
}

/// Grammar state after `prompt`, with any trailing prompt value treated as
/// complete.
pub(crate) fn grammar_after(prompt: &[TokenId], vocab: &Vocab) -> Result<GrammarState> {
    let mut g = GrammarState::new(vocab, DEFAULT_MAX_VALUE_CHARS);
    g.consume(vocab, prompt)
        .map_err(|e| Error::InvalidArgument(format!("prompt is not a grammatical prefix: {e}")))?;
    g.seal_value();
    Ok(g)
}

/// Per-step mask callback that follows the grammar as tokens are appended.
pub(crate) fn grammar_mask<'a>(prompt_len: usize, mut g: GrammarState, vocab: &'a Vocab) -> impl FnMut(&[TokenId]) -> Option<Vec<TokenId>> + 'a {
    let mut seen = prompt_len;
    move |toks: &[TokenId]| {
        for &t in &toks[seen..] {
            g.advance(vocab, t).expect("masked sampling only emits allowed tokens");
        }
        seen = toks.len();
        Some(g.allowed(vocab))
    }
}

fn sample_row<R: Rng + ?Sized>(
    params: &LMParams<f32>,
    cfg: &OversampleConfig,
    schema: &Schema,
    vocab: &Vocab,
    prompt: &TokenSeq,
    rng: &mut R,
) -> Result<Option<Row>> {
    let scfg = SamplerConfig::with_temperature(cfg.temperature);
    let max_steps = params.config.max_len.saturating_sub(prompt.len());
    let out = match cfg.decode_mode {
        DecodeMode::Constrained => {
            let mask = grammar_mask(prompt.len(), grammar_after(prompt, vocab)?, vocab);
            sample_sequence(params, prompt, &scfg, mask, vocab.eos(), rng, max_steps)?
        }
        DecodeMode::Free => sample_sequence(params, prompt, &scfg, |_: &[TokenId]| None, vocab.eos(), rng, max_steps)?,
    };
    if out.truncated {
        return Ok(None);
    }
    Ok(decode_to_row(&out.tokens, vocab, schema)
        .ok()
        .filter(|r| r.label == schema.minority_label()))
}

/// Draws exactly `need` minority rows. Slot `i` uses its own stream derived
/// from `(seed, i)`, so results do not depend on evaluation order.
pub fn generate_minority(
    params: &LMParams<f32>,
    cfg: &OversampleConfig,
    schema: &Schema,
    vocab: &Vocab,
    minor: &Table,
    need: usize,
    seed: u64,
) -> Result<Table> {
    let bound = GrammarState::max_sequence_len(vocab, DEFAULT_MAX_VALUE_CHARS);
    if cfg.decode_mode == DecodeMode::Constrained && params.config.max_len < bound {
        return Err(Error::InvalidArgument(format!(
            "max_len {} is below the longest grammatical sequence ({bound})",
            params.config.max_len
        )));
    }
    let attempts = match cfg.decode_mode {
        DecodeMode::Constrained => 1,
        DecodeMode::Free => 1 + cfg.max_retries,
    };
    let mut rows = Vec::with_capacity(need);
    let mut failed = 0;
    for slot in 0..need {
        let mut r = rng::substream(seed, slot as u64);
        let mut got = None;
        for _ in 0..attempts {
            let prompt = build_prompt(cfg.condition, schema, minor, vocab, &mut r)?;
            match sample_row(params, cfg, schema, vocab, &prompt, &mut r)? {
                Some(row) => {
                    got = Some(row);
                    break;
                }
                None => failed += 1,
            }
        }
        match got {
            Some(row) => rows.push(row),
            None => {
                return Err(Error::Generation {
                    accepted: rows.len(),
                    failed,
                })
            }
        }
    }
    Table::new(schema.clone(), rows)
}
