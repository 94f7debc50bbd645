//! SMOTE and SMOTE-NC baselines.

use rand::Rng;

use crate::data::{Row, Schema, Table, Value};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other points under `dist`, nearest first,
/// ties broken by index.
fn neighbors(n: usize, k: usize, dist: impl Fn(usize, usize) -> f64) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

fn check_minor(minor: &Table, need: usize, k: usize) -> Result<usize> {
    if need > 0 && minor.len() < 2 {
        return Err(Error::Degenerate(format!(
            "SMOTE needs at least 2 minority rows, got {}",
            minor.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(k.min(minor.len().saturating_sub(1)))
}

/// Continuous values as-is, categorical values as their declared index.
fn ordinal(row: &Row, schema: &Schema) -> Vec<f64> {
    row.values
        .iter()
        .zip(&schema.features)
        .map(|(v, spec)| match v {
            Value::Num(x) => *x,
            Value::Cat(c) => spec.category_index(c).expect("validated category") as f64,
        })
        .collect()
}

/// Plain SMOTE. Categorical features are ordinal-encoded by declared index,
/// interpolated like numbers, then rounded back to the nearest category.
pub fn smote<R: Rng + ?Sized>(minor: &Table, need: usize, k: usize, rng: &mut R) -> Result<Table> {
    let schema = minor.schema();
    if need == 0 {
        return Ok(Table::empty(schema.clone()));
    }
    let k = check_minor(minor, need, k)?;
    let points: Vec<Vec<f64>> = minor.rows().iter().map(|r| ordinal(r, schema)).collect();
    let nn = neighbors(points.len(), k, |i, j| sq_dist(&points[i], &points[j]));
    let label = schema.minority_label();
    let rows = (0..need)
        .map(|_| {
            let i = rng.random_range(0..points.len());
            let j = nn[i][rng.random_range(0..k)];
            let gap: f64 = rng.random();
            let values = schema
                .features
                .iter()
                .enumerate()
                .map(|(c, spec)| {
                    let v = points[i][c] + gap * (points[j][c] - points[i][c]);
                    if spec.is_continuous() {
                        Value::Num(v)
                    } else {
                        let cats = spec.category_list();
                        let idx = (v.round().max(0.0) as usize).min(cats.len() - 1);
                        Value::Cat(cats[idx].clone())
                    }
                })
                .collect();
            Row::new(values, label)
        })
        .collect();
    Table::new(schema.clone(), rows)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Index of the largest count, the lowest index among ties.
fn majority(votes: &[usize]) -> usize {
    votes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i)
}

/// SMOTE-NC. Neighbors use Euclidean distance on standardized continuous
/// features plus a penalty of `med^2` per mismatched categorical, where `med`
/// is the median standard deviation of the standardized continuous features.
/// Each categorical is the majority value among the `k` neighbors of the base
/// point (ties to the lowest declared index).
pub fn smote_nc<R: Rng + ?Sized>(minor: &Table, need: usize, k: usize, rng: &mut R) -> Result<Table> {
    let schema = minor.schema();
    if schema.n_continuous() == 0 {
        return Err(Error::InvalidArgument("SMOTE-NC needs at least one continuous feature".into()));
    }
    if need == 0 {
        return Ok(Table::empty(schema.clone()));
    }
    let k = check_minor(minor, need, k)?;
    let rows = minor.rows();
    let n = rows.len();
    let con: Vec<usize> = (0..schema.n_features()).filter(|&j| schema.features[j].is_continuous()).collect();
    let cat: Vec<usize> = (0..schema.n_features()).filter(|&j| !schema.features[j].is_continuous()).collect();

    let num = |r: usize, j: usize| rows[r].values[j].as_num().expect("continuous value");
    let mut scaled = vec![Vec::with_capacity(con.len()); n];
    let mut stds = Vec::with_capacity(con.len());
    for &j in &con {
        let mean = (0..n).map(|r| num(r, j)).sum::<f64>() / n as f64;
        let sd = ((0..n).map(|r| (num(r, j) - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        for (r, s) in scaled.iter_mut().enumerate() {
            s.push((num(r, j) - mean) / scale);
        }
        stds.push(if sd > 0.0 { 1.0 } else { 0.0 });
    }
    let penalty = median(stds).powi(2);
    let nn = neighbors(n, k, |a, b| {
        let mismatches = cat.iter().filter(|&&j| rows[a].values[j] != rows[b].values[j]).count();
        sq_dist(&scaled[a], &scaled[b]) + penalty * mismatches as f64
    });

    let label = schema.minority_label();
    let out = (0..need)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = nn[i][rng.random_range(0..k)];
            let gap: f64 = rng.random();
            let values = schema
                .features
                .iter()
                .enumerate()
                .map(|(c, spec)| {
                    if spec.is_continuous() {
                        Value::Num(num(i, c) + gap * (num(j, c) - num(i, c)))
                    } else {
                        let cats = spec.category_list();
                        let mut votes = vec![0usize; cats.len()];
                        for &m in &nn[i] {
                            let v = rows[m].values[c].as_cat().expect("categorical value");
                            votes[spec.category_index(v).expect("validated category")] += 1;
                        }
                        Value::Cat(cats[majority(&votes)].clone())
                    }
                })
                .collect();
            Row::new(values, label)
        })
        .collect();
    Table::new(schema.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_fixture, FeatureSpec, TargetSpec};
    use crate::rng;

    fn xy_schema() -> Schema {
        Schema::new(
            vec![FeatureSpec::continuous("x"), FeatureSpec::continuous("y")],
            TargetSpec::new("t", ["a", "b"], "b"),
        )
        .unwrap()
    }

    fn nums(r: &Row) -> Vec<f64> {
        r.values.iter().filter_map(Value::as_num).collect()
    }

    #[test]
    fn two_points_give_points_on_the_segment() {
        let t = Table::new(
            xy_schema(),
            vec![Row::new(vec![Value::Num(0.0), Value::Num(0.0)], "b"), Row::new(vec![Value::Num(2.0), Value::Num(2.0)], "b")],
        )
        .unwrap();
        let out = smote(&t, 7, 5, &mut rng::stream(0)).unwrap();
        assert_eq!(out.len(), 7);
        for r in out.rows() {
            let v = nums(r);
            assert!((v[0] - v[1]).abs() < 1e-12 && (0.0..=2.0).contains(&v[0]));
            assert_eq!(r.label, "b");
        }
    }

    #[test]
    fn outputs_are_convex_combinations_of_a_point_and_a_neighbor() {
        let t = generate_fixture(10, 25, 4, 0, 3).filter_label("minor");
        let pts: Vec<Vec<f64>> = t.rows().iter().map(nums).collect();
        let k = 5;
        let nn = neighbors(pts.len(), k, |i, j| sq_dist(&pts[i], &pts[j]));
        let out = smote(&t, 100, k, &mut rng::stream(1)).unwrap();
        for r in out.rows() {
            let s = nums(r);
            let ok = (0..pts.len()).any(|i| {
                nn[i].iter().any(|&j| {
                    let gaps: Vec<f64> = (0..4)
                        .filter(|&c| (pts[j][c] - pts[i][c]).abs() > 1e-12)
                        .map(|c| (s[c] - pts[i][c]) / (pts[j][c] - pts[i][c]))
                        .collect();
                    !gaps.is_empty()
                        && gaps.iter().all(|g| (g - gaps[0]).abs() < 1e-9 && (-1e-12..=1.0 + 1e-12).contains(g))
                })
            });
            assert!(ok, "{s:?} is not on a neighbor segment");
        }
    }

    #[test]
    fn k_is_clamped_and_small_inputs_rejected() {
        let t = generate_fixture(5, 3, 2, 1, 4).filter_label("minor");
        assert_eq!(smote(&t, 4, 10, &mut rng::stream(0)).unwrap().len(), 4);
        assert_eq!(smote_nc(&t, 4, 10, &mut rng::stream(0)).unwrap().len(), 4);
        let one = Table::new(t.schema().clone(), vec![t.rows()[0].clone()]).unwrap();
        assert!(smote(&one, 1, 5, &mut rng::stream(0)).is_err());
        assert!(smote(&one, 0, 5, &mut rng::stream(0)).unwrap().is_empty());
    }

    #[test]
    fn smote_nc_votes_categories() {
        let t = generate_fixture(10, 30, 3, 2, 9).filter_label("minor");
        let out = smote_nc(&t, 50, 1, &mut rng::stream(2)).unwrap();
        // k = 1: categories are copied from the single neighbor of the base point.
        let rows = t.rows();
        for r in out.rows() {
            let copied = rows.iter().any(|x| x.values[3] == r.values[3] && x.values[4] == r.values[4]);
            assert!(copied);
        }
        let same_cat: Vec<Row> = rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.values[3] = Value::Cat("B".into());
                r
            })
            .collect();
        let t2 = Table::new(t.schema().clone(), same_cat).unwrap();
        let out = smote_nc(&t2, 30, 5, &mut rng::stream(3)).unwrap();
        assert!(out.rows().iter().all(|r| r.values[3] == Value::Cat("B".into())));
    }

    #[test]
    fn smote_nc_continuous_parts_stay_in_parent_box() {
        let t = generate_fixture(10, 30, 3, 2, 9).filter_label("minor");
        let out = smote_nc(&t, 200, 5, &mut rng::stream(5)).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = t.rows().iter().map(|r| r.values[c].as_num().unwrap()).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(out.rows().iter().all(|r| (lo..=hi).contains(&r.values[c].as_num().unwrap())));
        }
    }

    #[test]
    fn median_and_vote_ties() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![1.0, 0.0]), 0.5);
        assert_eq!(majority(&[2, 2, 1]), 0);
        assert_eq!(majority(&[0, 1, 1]), 1);
        assert_eq!(majority(&[0, 0, 3]), 2);
    }
}
