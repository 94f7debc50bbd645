//! Fixed-width numeric encoding of mixed-type rows.

use crate::data::{Row, Schema, Table, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Channel {
    /// Min-max scaling, clipped to [0, 1].
    Scaled { min: f64, max: f64 },
    /// One-hot over the declared categories.
    OneHot { categories: Vec<String> },
}

/// Min-max scaled continuous features (fit on reference data) followed by
/// one-hot categorical features.
#[derive(Debug, Clone)]
pub struct MixedEncoder {
    channels: Vec<Channel>,
    width: usize,
}

impl MixedEncoder {
    pub fn fit(reference: &Table) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Degenerate("cannot fit an encoder on an empty table".into()));
        }
        let schema = reference.schema();
        let channels: Vec<Channel> = schema
            .features
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                if spec.is_continuous() {
                    let col = reference.rows().iter().filter_map(|r| r.values[j].as_num());
                    let (min, max) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                    Channel::Scaled { min, max }
                } else {
                    Channel::OneHot {
                        categories: spec.category_list().to_vec(),
                    }
                }
            })
            .collect();
        Ok(Self::from_channels(channels))
    }

    fn from_channels(channels: Vec<Channel>) -> Self {
        let width = channels
            .iter()
            .map(|c| match c {
                Channel::Scaled { .. } => 1,
                Channel::OneHot { categories } => categories.len(),
            })
            .sum();
        MixedEncoder { channels, width }
    }

    /// `M_con + Σ |categories|`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn encode_row(&self, row: &Row) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width);
        for (channel, value) in self.channels.iter().zip(&row.values) {
            match (channel, value) {
                (Channel::Scaled { min, max }, Value::Num(x)) => {
                    let span = max - min;
                    let v = if span > 0.0 { (x - min) / span } else { 0.0 };
                    out.push(v.clamp(0.0, 1.0));
                }
                (Channel::OneHot { categories }, Value::Cat(c)) => {
                    out.extend(categories.iter().map(|k| if k == c { 1.0 } else { 0.0 }));
                }
                _ => panic!("row does not match the encoder schema"),
            }
        }
        out
    }

    pub fn encode(&self, table: &Table) -> Vec<Vec<f64>> {
        table.rows().iter().map(|r| self.encode_row(r)).collect()
    }

    pub(crate) fn check_schema(&self, schema: &Schema) -> Result<()> {
        let ok = schema.features.len() == self.channels.len()
            && schema.features.iter().zip(&self.channels).all(|(f, c)| match c {
                Channel::Scaled { .. } => f.is_continuous(),
                Channel::OneHot { categories } => f.category_list() == categories.as_slice(),
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Schema("table does not match the encoder schema".into()))
        }
    }
}
