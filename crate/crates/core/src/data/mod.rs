//! Tabular dataset model: schema, rows, CSV ingestion, splitting and
//! imbalance construction.
//!
//! Tables are immutable values once built; every randomized operation is a
//! pure function of its seed.

mod fixture;
mod io;
mod schema;

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};

pub use fixture::{fixture_schema, generate_fixture};
pub use io::{load_csv, write_csv};
pub use schema::{FeatureKind, FeatureSpec, Schema, TargetSpec};

use crate::error::{Error, Result};
use crate::rng;

/// A single cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub values: Vec<Value>,
    pub label: String,
}

impl Row {
    pub fn new(values: Vec<Value>, label: impl Into<String>) -> Self {
        Row {
            values,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    rows: Vec<Row>,
}

impl Table {
    /// Builds a table, checking every row against the schema.
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            schema
                .check_row(row)
                .map_err(|msg| Error::Schema(format!("row {i}: {msg}")))?;
        }
        Ok(Table { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Table {
            schema,
            rows: Vec::new(),
        }
    }

    pub(crate) fn from_trusted(schema: Schema, rows: Vec<Row>) -> Self {
        debug_assert!(rows.iter().all(|r| schema.check_row(r).is_ok()));
        Table { schema, rows }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<Row> {
        self.rows
    }

    /// Rows carrying `label`, in table order.
    pub fn filter_label(&self, label: &str) -> Table {
        let rows = self
            .rows
            .iter()
            .filter(|r| r.label == label)
            .cloned()
            .collect();
        Table::from_trusted(self.schema.clone(), rows)
    }

    /// Concatenation of two tables over the same schema.
    pub fn concat(&self, other: &Table) -> Result<Table> {
        if self.schema != other.schema {
            return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(Table::from_trusted(self.schema.clone(), rows))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceSpec {
    pub q: f64,
    pub seed: u64,
}

impl ImbalanceSpec {
    pub fn new(q: f64, seed: u64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!("imbalance ratio q must lie in (0, 1], got {q}")));
        }
        Ok(ImbalanceSpec { q, seed })
    }
}

/// Output of [`make_imbalanced`].
#[derive(Debug, Clone)]
pub struct ImbalancedSplit {
    pub major: Table,
    /// Retained minority rows, visible to oversamplers.
    pub minor: Table,
    /// Every minority row of the training set; evaluation only.
    pub minor_star: Table,
}

pub fn class_counts(table: &Table) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for row in table.rows() {
        *counts.entry(row.label.clone()).or_insert(0) += 1;
    }
    counts
}

/// Stratified, seeded train/test split.
///
/// The train part has `round(N * (1 - test_fraction))` rows. Each label's share
/// of the test part is proportional to its frequency, with at least one row of
/// every label on each side whenever the counts allow it.
pub fn split_train_test(table: &Table, test_fraction: f64, seed: u64) -> Result<(Table, Table)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if table.is_empty() {
        return Err(Error::Degenerate("cannot split an empty table".into()));
    }
    let n = table.len();
    let n_train = ((n as f64) * (1.0 - test_fraction)).round() as usize;
    let n_test = n - n_train;

    let labels = &table.schema().target.labels;
    let mut groups: Vec<Vec<usize>> = labels
        .iter()
        .map(|l| {
            table
                .rows()
                .iter()
                .enumerate()
                .filter(|(_, r)| &r.label == l)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    for (label, g) in labels.iter().zip(&groups) {
        if g.len() < 2 {
            return Err(Error::Degenerate(format!(
                "label {label:?} has {} rows; at least 2 are needed to stratify",
                g.len()
            )));
        }
    }

    let quotas = allocate_test_quota(&groups.iter().map(Vec::len).collect::<Vec<_>>(), n_test);

    let mut rng = rng::stream(seed);
    let mut train_idx = Vec::with_capacity(n_train);
    let mut test_idx = Vec::with_capacity(n_test);
    for (g, quota) in groups.iter_mut().zip(quotas) {
        g.shuffle(&mut rng);
        test_idx.extend_from_slice(&g[..quota]);
        train_idx.extend_from_slice(&g[quota..]);
    }
    train_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);

    let pick = |idx: &[usize]| {
        Table::from_trusted(
            table.schema().clone(),
            idx.iter().map(|&i| table.rows()[i].clone()).collect(),
        )
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

/// Largest-remainder allocation of `n_test` rows across label groups, keeping
/// each group's test count in `[1, size - 1]` when the total permits.
fn allocate_test_quota(sizes: &[usize], n_test: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let ideal: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * n_test as f64 / total as f64)
        .collect();
    let mut quota: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    for strict in [true, false] {
        let lo = |_: usize| if strict { 1 } else { 0 };
        let hi = |i: usize| if strict { sizes[i] - 1 } else { sizes[i] };
        for i in 0..sizes.len() {
            quota[i] = quota[i].clamp(lo(i), hi(i).max(lo(i)));
        }
        loop {
            let sum: usize = quota.iter().sum();
            let deficit = |i: usize| ideal[i] - quota[i] as f64;
            let step = if sum < n_test {
                (0..sizes.len())
                    .filter(|&i| quota[i] < hi(i))
                    .max_by(|&a, &b| deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a)))
                    .map(|i| (i, true))
            } else if sum > n_test {
                (0..sizes.len())
                    .filter(|&i| quota[i] > lo(i))
                    .min_by(|&a, &b| deficit(a).total_cmp(&deficit(b)).then(a.cmp(&b)))
                    .map(|i| (i, false))
            } else {
                None
            };
            match step {
                Some((i, true)) => quota[i] += 1,
                Some((i, false)) => quota[i] -= 1,
                None => break,
            }
        }
        if quota.iter().sum::<usize>() == n_test {
            break;
        }
    }
    quota
}

/// Splits a training table into majority rows, a `q`-fraction of the minority
/// rows, and the full minority set.
pub fn make_imbalanced(train: &Table, spec: &ImbalanceSpec) -> Result<ImbalancedSplit> {
    let schema = train.schema();
    let minority = schema.target.minority_label.as_str();
    let minor_star = train.filter_label(minority);
    if minor_star.is_empty() {
        return Err(Error::Degenerate(format!(
            "training set has no rows with minority label {minority:?}"
        )));
    }
    let major_rows = train
        .rows()
        .iter()
        .filter(|r| r.label != minority)
        .cloned()
        .collect();
    let major = Table::from_trusted(schema.clone(), major_rows);

    let n_star = minor_star.len();
    let n_minor = ((spec.q * n_star as f64).round() as usize).clamp(1, n_star);
    let mut rng = rng::stream(spec.seed);
    let mut picked = index::sample(&mut rng, n_star, n_minor).into_vec();
    picked.sort_unstable();
    let minor = Table::from_trusted(
        schema.clone(),
        picked.iter().map(|&i| minor_star.rows()[i].clone()).collect(),
    );
    Ok(ImbalancedSplit {
        major,
        minor,
        minor_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_schema() -> Schema {
        Schema::new(
            vec![FeatureSpec::continuous("x")],
            TargetSpec::new("y", ["a", "b"], "b"),
        )
        .unwrap()
    }

    fn tiny_table(labels: &[&str]) -> Table {
        let rows = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Row::new(vec![Value::Num(i as f64)], *l))
            .collect();
        Table::new(tiny_schema(), rows).unwrap()
    }

    fn sorted_xs(t: &Table) -> Vec<f64> {
        let mut v: Vec<f64> = t.rows().iter().map(|r| r.values[0].as_num().unwrap()).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn class_counts_basic() {
        let t = tiny_table(&["a", "a", "b"]);
        let c = class_counts(&t);
        assert_eq!(c.get("a"), Some(&2));
        assert_eq!(c.get("b"), Some(&1));
        assert!(class_counts(&Table::empty(tiny_schema())).is_empty());
    }

    #[test]
    fn split_ten_rows_is_stratified() {
        let t = tiny_table(&["a", "b", "a", "b", "a", "b", "a", "b", "a", "b"]);
        let (train, test) = split_train_test(&t, 0.2, 3).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        for part in [&train, &test] {
            let c = class_counts(part);
            assert!(c.contains_key("a") && c.contains_key("b"));
        }
        let (train2, test2) = split_train_test(&t, 0.2, 3).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let mut all = sorted_xs(&train);
        all.extend(sorted_xs(&test));
        all.sort_by(f64::total_cmp);
        assert_eq!(all, sorted_xs(&t));
    }

    #[test]
    fn split_half_of_four() {
        let t = tiny_table(&["a", "b", "a", "b"]);
        let (train, test) = split_train_test(&t, 0.5, 0).unwrap();
        assert_eq!((train.len(), test.len()), (2, 2));
    }

    #[test]
    fn split_rejects_singleton_label() {
        let t = tiny_table(&["a", "a", "a", "b"]);
        assert!(matches!(split_train_test(&t, 0.5, 0), Err(Error::Degenerate(_))));
        assert!(split_train_test(&t, 1.0, 0).is_err());
    }

    #[test]
    fn quota_allocation_respects_bounds() {
        assert_eq!(allocate_test_quota(&[5, 5], 2), vec![1, 1]);
        assert_eq!(allocate_test_quota(&[400, 100], 100), vec![80, 20]);
        let q = allocate_test_quota(&[98, 2], 20);
        assert_eq!(q.iter().sum::<usize>(), 20);
        assert_eq!(q[1], 1);
    }

    #[test]
    fn imbalance_sizes() {
        let mut labels = vec!["a"; 50];
        labels.extend(vec!["b"; 100]);
        let t = tiny_table(&labels);
        let split = make_imbalanced(&t, &ImbalanceSpec::new(0.2, 1).unwrap()).unwrap();
        assert_eq!(split.minor.len(), 20);
        assert_eq!(split.minor_star.len(), 100);
        assert_eq!(split.major.len(), 50);

        let full = make_imbalanced(&t, &ImbalanceSpec::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(full.minor, full.minor_star);

        let t3 = tiny_table(&["a", "a", "b", "b", "b"]);
        let s3 = make_imbalanced(&t3, &ImbalanceSpec::new(0.2, 1).unwrap()).unwrap();
        assert_eq!(s3.minor.len(), 1);
    }

    #[test]
    fn imbalance_requires_minority() {
        let t = tiny_table(&["a", "a"]);
        assert!(make_imbalanced(&t, &ImbalanceSpec::new(0.5, 0).unwrap()).is_err());
        assert!(ImbalanceSpec::new(0.0, 0).is_err());
    }
}
