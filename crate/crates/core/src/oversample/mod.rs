//! Oversamplers: the language-model pipeline and classical baselines.
//!
//! The pipeline interpolates minority rows, fine-tunes a small language model
//! on serialized minority (and optionally majority or interpolated) rows, then
//! prompts it with the minority label, optionally followed by one seeded
//! feature value, to generate synthetic minority rows.

mod corpus;
mod generate;
mod interpolate;
mod smote;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use corpus::{build_finetune_corpus, FinetuneCorpus};
pub use generate::{build_prompt, generate_minority};
pub(crate) use generate::grammar_after;
pub use interpolate::{build_interpolation_set, interpolate, PartialRow};
pub use smote::{smote, smote_nc, DEFAULT_K};

use crate::data::Table;
use crate::error::{Error, Result};
use crate::lm::{init_params, train, LMConfig, LMParams, TrainConfig};
use crate::rng;
use crate::textcodec::{GrammarState, Permutation, Vocab, DEFAULT_MAX_VALUE_CHARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStrategy {
    /// Prompt with the minority label only.
    ConditionY,
    /// Prompt with the minority label and one seeded feature value.
    ConditionYx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneSet {
    MajorMinor,
    MinorOnly,
    MinorInterpolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Constrained,
    Free,
}

macro_rules! snake_names {
    ($($t:ty { $($v:ident => $s:literal),* })*) => {$(
        impl $t {
            pub fn name(self) -> &'static str {
                match self { $(Self::$v => $s),* }
            }
        }
    )*};
}

snake_names! {
    ConditionStrategy { ConditionY => "condition_y", ConditionYx => "condition_yx" }
    FinetuneSet { MajorMinor => "major_minor", MinorOnly => "minor_only", MinorInterpolate => "minor_interpolate" }
    DecodeMode { Constrained => "constrained", Free => "free" }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OversampleConfig {
    pub condition: ConditionStrategy,
    pub permutation: Permutation,
    pub finetune: FinetuneSet,
    /// Interpolated rows per majority row.
    pub r: f64,
    pub temperature: f64,
    pub decode_mode: DecodeMode,
    pub max_retries: usize,
    /// `vocab_size` 0 means "take it from the schema vocabulary".
    pub lm: LMConfig,
    pub train: TrainConfig,
}

impl Default for OversampleConfig {
    fn default() -> Self {
        OversampleConfig {
            condition: ConditionStrategy::ConditionYx,
            permutation: Permutation::FixY,
            finetune: FinetuneSet::MinorInterpolate,
            r: 1.0,
            temperature: 0.7,
            decode_mode: DecodeMode::Constrained,
            max_retries: 16,
            lm: LMConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl OversampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::InvalidArgument(format!("r must lie in [0, 1], got {}", self.r)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        self.train.validate()
    }

    /// The same settings with the strategy axes replaced.
    pub fn with_strategy(&self, condition: ConditionStrategy, permutation: Permutation, finetune: FinetuneSet) -> Self {
        OversampleConfig {
            condition,
            permutation,
            finetune,
            ..self.clone()
        }
    }

    /// Language-model architecture for `vocab`.
    pub fn lm_config(&self, vocab: &Vocab) -> Result<LMConfig> {
        let lm = if self.lm.vocab_size == 0 {
            self.lm.with_vocab(vocab.len())
        } else {
            self.lm
        };
        if lm.vocab_size != vocab.len() {
            return Err(Error::InvalidArgument(format!(
                "lm.vocab_size {} does not match the schema vocabulary ({})",
                lm.vocab_size,
                vocab.len()
            )));
        }
        lm.validate()?;
        let bound = GrammarState::max_sequence_len(vocab, DEFAULT_MAX_VALUE_CHARS);
        if lm.max_len < bound {
            return Err(Error::InvalidArgument(format!(
                "lm.max_len {} is below the longest serialized row ({bound})",
                lm.max_len
            )));
        }
        Ok(lm)
    }
}

/// Method names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Imbllm,
    ImbllmInter,
    GreatEquiv,
    Smote,
    SmoteNc,
    ImbalanceNull,
}

snake_names! {
    MethodName {
        Imbllm => "imbllm",
        ImbllmInter => "imbllm_inter",
        GreatEquiv => "great_equiv",
        Smote => "smote",
        SmoteNc => "smote_nc",
        ImbalanceNull => "imbalance_null"
    }
}

impl MethodName {
    pub const ALL: [MethodName; 6] = [
        MethodName::Imbllm,
        MethodName::ImbllmInter,
        MethodName::GreatEquiv,
        MethodName::Smote,
        MethodName::SmoteNc,
        MethodName::ImbalanceNull,
    ];

    pub fn parse(s: &str) -> Option<MethodName> {
        MethodName::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// A fully expanded oversampling method.
#[derive(Debug, Clone, PartialEq)]
pub enum Oversampler {
    Llm(OversampleConfig),
    Smote { k: usize },
    SmoteNc { k: usize },
    /// Train on the imbalanced data as-is.
    Null,
}

impl Oversampler {
    /// Expands a method name. `imbllm_inter` forces `r = 0`; `great_equiv` uses
    /// label-only prompts, full permutation and a majority+minority corpus.
    pub fn from_name(name: MethodName, base: &OversampleConfig) -> Oversampler {
        match name {
            MethodName::Imbllm => Oversampler::Llm(base.clone()),
            MethodName::ImbllmInter => Oversampler::Llm(OversampleConfig { r: 0.0, ..base.clone() }),
            MethodName::GreatEquiv => Oversampler::Llm(base.with_strategy(
                ConditionStrategy::ConditionY,
                Permutation::PermuteXy,
                FinetuneSet::MajorMinor,
            )),
            MethodName::Smote => Oversampler::Smote { k: DEFAULT_K },
            MethodName::SmoteNc => Oversampler::SmoteNc { k: DEFAULT_K },
            MethodName::ImbalanceNull => Oversampler::Null,
        }
    }
}

/// Synthetic minority rows, plus the model that produced them if any.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub synthetic: Table,
    pub params: Option<LMParams<f32>>,
    pub epoch_losses: Vec<f64>,
}

/// Anything that can produce `need` synthetic minority rows from an
/// imbalanced training set. `None` means "no oversampling".
pub trait Oversample {
    fn oversample(&self, major: &Table, minor: &Table, need: usize, seed: u64) -> Result<Option<Synthesis>>;
}

impl Oversample for Oversampler {
    fn oversample(&self, major: &Table, minor: &Table, need: usize, seed: u64) -> Result<Option<Synthesis>> {
        let plain = |synthetic| {
            Some(Synthesis {
                synthetic,
                params: None,
                epoch_losses: Vec::new(),
            })
        };
        let mut r = rng::stream(rng::derive_seed(seed, "baseline"));
        match self {
            Oversampler::Llm(cfg) => run_pipeline(cfg, major, minor, need, seed).map(Some),
            Oversampler::Smote { k } => smote(minor, need, *k, &mut r).map(plain),
            Oversampler::SmoteNc { k } => smote_nc(minor, need, *k, &mut r).map(plain),
            Oversampler::Null => Ok(None),
        }
    }
}

/// The fine-tuning corpus for `cfg`, with the interpolation and permutation
/// streams derived from `seed`.
pub fn finetune_corpus(cfg: &OversampleConfig, major: &Table, minor: &Table, vocab: &Vocab, seed: u64) -> Result<FinetuneCorpus> {
    let inter = if cfg.finetune == FinetuneSet::MinorInterpolate {
        let count = (cfg.r * major.len() as f64).round() as usize;
        build_interpolation_set(minor, count, &mut rng::stream(rng::derive_seed(seed, "interpolate")))?
    } else {
        Vec::new()
    };
    FinetuneCorpus::new(
        cfg.finetune,
        major,
        minor,
        &inter,
        cfg.permutation,
        vocab,
        rng::derive_seed(seed, "permute"),
    )
}

/// Trains a model for `cfg` on the imbalanced training set; returns the
/// parameters and per-epoch losses. Every random stream is
/// derived from `seed`; `cfg.train.seed` acts as an extra offset.
pub fn finetune(cfg: &OversampleConfig, major: &Table, minor: &Table, seed: u64) -> Result<(LMParams<f32>, Vec<f64>)> {
    cfg.validate()?;
    let vocab = Vocab::build(minor.schema());
    let lm = cfg.lm_config(&vocab)?;
    let corpus = finetune_corpus(cfg, major, minor, &vocab, seed)?;
    info!(
        "fine-tuning on {} rows ({}, {}, {})",
        corpus.len(),
        cfg.condition.name(),
        cfg.permutation.name(),
        cfg.finetune.name()
    );
    let params = init_params::<f32>(lm, rng::derive_seed(seed, "init"))?;
    let tcfg = TrainConfig {
        seed: rng::derive_seed(seed, "train").wrapping_add(cfg.train.seed),
        ..cfg.train
    };
    let report = train(params, &corpus, &tcfg)?;
    Ok((report.params, report.epoch_losses))
}

fn run_pipeline(cfg: &OversampleConfig, major: &Table, minor: &Table, need: usize, seed: u64) -> Result<Synthesis> {
    let (params, epoch_losses) = finetune(cfg, major, minor, seed)?;
    let schema = minor.schema();
    let vocab = Vocab::build(schema);
    let synthetic = generate_minority(&params, cfg, schema, &vocab, minor, need, rng::derive_seed(seed, "generate"))?;
    Ok(Synthesis {
        synthetic,
        params: Some(params),
        epoch_losses,
    })
}

/// `major ∪ synthetic_minor`, shuffled deterministically by `seed`.
pub fn rebalance(major: &Table, synthetic_minor: &Table, seed: u64) -> Result<Table> {
    let joined = major.concat(synthetic_minor)?;
    let schema = joined.schema().clone();
    let mut rows = joined.into_rows();
    rows.shuffle(&mut rng::stream(rng::derive_seed(seed, "rebalance")));
    Table::new(schema, rows)
}
