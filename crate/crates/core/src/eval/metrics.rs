//! Classification scores and synthetic-data quality metrics.

use serde::{Deserialize, Serialize};

use super::MixedEncoder;
use crate::data::Table;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_COVERAGE_K: usize = 2;
pub const DEFAULT_DCR_BINS: usize = 20;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// F1 with the minority label as the positive class; 0 when precision and
/// recall are both 0.
pub fn f1_minority(preds: &[String], truth: &[String], minority_label: &str) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::InvalidArgument("predictions and truth differ in length".into()));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("F1 of an empty set".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, t) in preds.iter().zip(truth) {
        match (p == minority_label, t == minority_label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    Ok(if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    })
}

/// ROC AUC by average ranks (ties share the mean rank).
pub fn auc(scores: &[f64], truth: &[String], minority_label: &str) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidArgument("scores and truth differ in length".into()));
    }
    let n_pos = truth.iter().filter(|t| *t == minority_label).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("AUC needs both classes in the truth labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += order[i..=j].iter().filter(|&&k| truth[k] == minority_label).count() as f64 * mean_rank;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

fn encoded_pair(real: &Table, synth: &Table, encoder: &MixedEncoder) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    encoder.check_schema(real.schema())?;
    encoder.check_schema(synth.schema())?;
    if real.is_empty() || synth.is_empty() {
        return Err(Error::Degenerate("metric needs non-empty real and synthetic tables".into()));
    }
    Ok((encoder.encode(real), encoder.encode(synth)))
}

/// Per real row, the Euclidean distance (in encoded space) to the closest
/// synthetic row.
pub fn closest_distances(real: &Table, synth: &Table, encoder: &MixedEncoder) -> Result<Vec<f64>> {
    let (r, s) = encoded_pair(real, synth, encoder)?;
    Ok(r.iter()
        .map(|x| s.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .collect())
}

/// Fraction of real rows whose nearest synthetic row lies within `alpha`,
/// distances divided by `sqrt(width)` so they fall in [0, 1].
pub fn close_probability(minor_star: &Table, synth: &Table, alpha: f64, encoder: &MixedEncoder) -> Result<f64> {
    let norm = (encoder.width() as f64).sqrt();
    let d = closest_distances(minor_star, synth, encoder)?;
    Ok(d.iter().filter(|&&x| x / norm <= alpha).count() as f64 / d.len() as f64)
}

/// Fraction of real rows whose closed ball, with radius the distance to their
/// `k`-th nearest other real row, contains a synthetic row.
pub fn coverage(minor_star: &Table, synth: &Table, k: usize, encoder: &MixedEncoder) -> Result<f64> {
    if k == 0 || minor_star.len() <= k {
        return Err(Error::Degenerate(format!(
            "coverage with k = {k} needs more than {k} real rows, got {}",
            minor_star.len()
        )));
    }
    let (r, s) = encoded_pair(minor_star, synth, encoder)?;
    let covered = (0..r.len())
        .filter(|&i| {
            let mut others: Vec<f64> = (0..r.len()).filter(|&j| j != i).map(|j| dist(&r[i], &r[j])).collect();
            others.sort_by(f64::total_cmp);
            let radius = others[k - 1];
            s.iter().any(|y| dist(&r[i], y) <= radius)
        })
        .count();
    Ok(covered as f64 / r.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges from 0 to the largest distance.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Distances to closest record, binned into `bins` equal-width bins over
/// `[0, max]`. The last bin is closed on the right.
pub fn dcr_histogram(test_minor: &Table, synth: &Table, encoder: &MixedEncoder, bins: usize) -> Result<(Histogram, Vec<f64>)> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let d = closest_distances(test_minor, synth, encoder)?;
    let max = d.iter().cloned().fold(0.0, f64::max);
    let edges = (0..=bins).map(|b| max * b as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for &x in &d {
        let b = if max > 0.0 { ((x / max) * bins as f64) as usize } else { 0 };
        counts[b.min(bins - 1)] += 1;
    }
    Ok((Histogram { edges, counts }, d))
}
