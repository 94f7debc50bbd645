//! Convex interpolation between minority rows (continuous features only).

use rand::seq::index;
use rand::Rng;

use crate::data::{Row, Schema, Table, Value};
use crate::error::{Error, Result};
use crate::textcodec::{format_number, Field, Sentence};

/// An interpolated row: continuous values only, plus a label.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialRow {
    /// `(feature index, value)` in schema order.
    pub continuous: Vec<(usize, f64)>,
    pub label: String,
}

impl PartialRow {
    /// `name is value` fields for every continuous feature, then the target.
    pub fn to_sentence(&self, schema: &Schema, sig_digits: usize) -> Result<Sentence> {
        let mut fields = Vec::with_capacity(self.continuous.len() + 1);
        for &(j, x) in &self.continuous {
            fields.push(Field::new(&schema.features[j].name, format_number(x, sig_digits)?));
        }
        fields.push(Field::new(&schema.target.name, &self.label));
        Ok(Sentence { fields })
    }
}

/// `x_i + eps * (x_j - x_i)` on every continuous feature.
pub fn interpolate(x_i: &Row, x_j: &Row, eps: f64, schema: &Schema) -> Result<PartialRow> {
    let minority = schema.minority_label();
    if x_i.label != minority || x_j.label != minority {
        return Err(Error::InvalidArgument(format!(
            "interpolation parents must carry the minority label {minority:?}"
        )));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps must lie in [0, 1], got {eps}")));
    }
    let continuous = x_i
        .values
        .iter()
        .zip(&x_j.values)
        .enumerate()
        .filter_map(|(j, pair)| match pair {
            (Value::Num(a), Value::Num(b)) => Some((j, a + eps * (b - a))),
            _ => None,
        })
        .collect();
    Ok(PartialRow {
        continuous,
        label: minority.to_string(),
    })
}

/// `target_count` interpolants between uniformly drawn distinct parent pairs,
/// with `eps ~ U[0, 1)`.
pub fn build_interpolation_set<R: Rng + ?Sized>(minor: &Table, target_count: usize, rng: &mut R) -> Result<Vec<PartialRow>> {
    if target_count == 0 {
        return Ok(Vec::new());
    }
    let n = minor.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "interpolation needs at least 2 minority rows, got {n}"
        )));
    }
    let rows = minor.rows();
    (0..target_count)
        .map(|_| {
            let pair = index::sample(rng, n, 2);
            let eps: f64 = rng.random();
            interpolate(&rows[pair.index(0)], &rows[pair.index(1)], eps, minor.schema())
        })
        .collect()
}
