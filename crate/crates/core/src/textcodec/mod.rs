//! Row ↔ sentence serialization.
//!
//! A row becomes a sentence of fields `name is value`, one per feature plus one
//! for the target. Sentences are permuted (either all fields, or features only
//! with the target pinned first), then encoded into a closed token vocabulary:
//! names, categories and labels are single tokens, numbers are spelled one
//! character per token.

mod grammar;
mod number;
mod vocab;

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use grammar::{GrammarError, GrammarState, DEFAULT_MAX_VALUE_CHARS};
pub use number::format_number;
pub use vocab::{decode_to_row, encode, ParseError, Token, TokenId, TokenSeq, Vocab, BOS};
pub(crate) use vocab::encode_field;

use crate::data::{Row, Schema, Value};

/// One `name is value` pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Field {
    pub name: String,
    pub value_text: String,
}

impl Field {
    pub fn new(name: impl Into<String>, value_text: impl Into<String>) -> Self {
        Field {
            name: name.into(),
            value_text: value_text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub fields: Vec<Field>,
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} is {}", field.name, field.value_text)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Permutation {
    /// Shuffle every field, target included.
    PermuteXy,
    /// Target first, features shuffled behind it.
    FixY,
}

impl Permutation {
    pub fn name(self) -> &'static str {
        match self {
            Permutation::PermuteXy => "permute_xy",
            Permutation::FixY => "fix_y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub sig_digits: usize,
    pub permutation: Permutation,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            sig_digits: 4,
            permutation: Permutation::FixY,
        }
    }
}

/// Serializes a row in schema order; when `include_categorical` is false only
/// continuous features (plus the target) are emitted.
pub fn row_to_sentence(row: &Row, schema: &Schema, include_categorical: bool, sig_digits: usize) -> Sentence {
    let mut fields = Vec::with_capacity(row.values.len() + 1);
    for (spec, value) in schema.features.iter().zip(&row.values) {
        match value {
            Value::Num(x) => fields.push(Field::new(
                &spec.name,
                format_number(*x, sig_digits).expect("rows hold finite numbers"),
            )),
            Value::Cat(c) if include_categorical => fields.push(Field::new(&spec.name, c)),
            Value::Cat(_) => {}
        }
    }
    fields.push(Field::new(&schema.target.name, &row.label));
    Sentence { fields }
}

/// Reorders fields according to `strategy`. `target_name` identifies the field
/// pinned first under [`Permutation::FixY`].
pub fn permute_sentence<R: Rng + ?Sized>(
    sentence: &Sentence,
    target_name: &str,
    strategy: Permutation,
    rng: &mut R,
) -> Sentence {
    let mut fields = sentence.fields.clone();
    match strategy {
        Permutation::PermuteXy => fields.shuffle(rng),
        Permutation::FixY => {
            let pos = fields
                .iter()
                .position(|f| f.name == target_name)
                .expect("sentence contains the target field");
            let target = fields.remove(pos);
            fields.shuffle(rng);
            fields.insert(0, target);
        }
    }
    Sentence { fields }
}
