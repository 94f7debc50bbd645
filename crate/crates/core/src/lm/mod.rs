//! A small decoder-only transformer trained from scratch.
//!
//! Pre-norm residual blocks (causal multi-head attention followed by a GELU
//! MLP), learned token and position embeddings, and a linear output head.
//! Everything is generic over the scalar type: production code runs in `f32`,
//! the gradient check runs the very same code in `f64`.
//!
//! Inference and training share one per-position kernel that appends keys and
//! values to a cache, so a cached incremental decode is bitwise identical to a
//! full forward pass.

mod checkpoint;
mod model;
mod params;
mod sample;
mod scalar;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC};
pub use model::{attention_maps, forward, grad, nll_loss, AttentionMaps, KvCache};
pub use params::{init_params, LMParams, LayerParams};
pub use sample::{next_token_dist, sample_sequence, shannon_entropy, Decoder, SampleOutput, SamplerConfig};
pub use scalar::Scalar;
pub use train::{train, CorpusSource, TrainConfig, TrainReport};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LMConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_k: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl Default for LMConfig {
    fn default() -> Self {
        LMConfig {
            vocab_size: 0,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_k: 16,
            d_ff: 128,
            max_len: 256,
        }
    }
}

impl LMConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 || self.max_len == 0 {
            return bad(format!("model dimensions must be positive: {self:?}"));
        }
        if self.n_heads * self.d_k != self.d_model {
            return bad(format!(
                "n_heads * d_k must equal d_model ({} * {} != {})",
                self.n_heads, self.d_k, self.d_model
            ));
        }
        Ok(())
    }

    /// Same architecture with the vocabulary size filled in.
    pub fn with_vocab(mut self, vocab_size: usize) -> Self {
        self.vocab_size = vocab_size;
        self
    }
}
