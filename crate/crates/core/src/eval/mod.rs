//! Downstream classifier, quality metrics, entropy diagnostics, and the
//! per-seed evaluation loop.

mod encoder;
mod entropy;
mod gbdt;
mod metrics;

use serde::{Deserialize, Serialize};

pub use encoder::MixedEncoder;
pub use entropy::{per_step_entropy, plug_in_entropy, sample_set_entropy, Discretizer, StepEntropy, ENTROPY_BINS};
pub use gbdt::{fit_gbdt, GbdtConfig, GbdtModel};
pub use metrics::{
    auc, close_probability, closest_distances, coverage, dcr_histogram, f1_minority, Histogram, DEFAULT_ALPHA,
    DEFAULT_COVERAGE_K, DEFAULT_DCR_BINS,
};

use crate::data::{ImbalancedSplit, Table};
use crate::error::Result;
use crate::oversample::{rebalance, Oversample, Synthesis};

/// Scores of one seed. Synthetic-set metrics are absent when the method
/// produced no synthetic rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScores {
    pub seed: u64,
    pub f1: f64,
    pub auc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub close_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

/// Means over seeds plus the per-seed breakdown. `dcr` is the histogram of
/// the first seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub auc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub close_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    pub per_seed: Vec<SeedScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dcr: Option<Histogram>,
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn f1_std(&self) -> f64 {
        mean_std(&self.per_seed.iter().map(|s| s.f1).collect::<Vec<_>>()).1
    }

    pub fn auc_std(&self) -> f64 {
        mean_std(&self.per_seed.iter().map(|s| s.auc).collect::<Vec<_>>()).1
    }
}

/// Everything produced by [`run_evaluation`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Raw DCR distances of the first seed.
    pub dcr_distances: Option<Vec<f64>>,
    /// Oversampler output per seed, in seed order.
    pub syntheses: Vec<Option<Synthesis>>,
}

/// For every seed: oversample to `|major|` synthetic rows, rebalance, fit the
/// classifier, score the test set, and measure the synthetic set against
/// `minor_star` (close probability, coverage) and the test minority rows
/// (DCR). A method returning `None` trains on `major ∪ minor` instead.
pub fn run_evaluation(
    split: &ImbalancedSplit,
    test: &Table,
    method: &dyn Oversample,
    seeds: &[u64],
    gbdt: &GbdtConfig,
) -> Result<Evaluation> {
    if seeds.is_empty() {
        return Err(crate::Error::InvalidArgument("at least one seed is required".into()));
    }
    let schema = test.schema();
    let minority = schema.minority_label();
    let truth: Vec<String> = test.rows().iter().map(|r| r.label.clone()).collect();
    let test_minor = test.filter_label(minority);
    let encoder = MixedEncoder::fit(&split.minor_star)?;

    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut syntheses = Vec::with_capacity(seeds.len());
    let mut dcr = None;
    let mut dcr_distances = None;
    for &seed in seeds {
        let synthesis = method.oversample(&split.major, &split.minor, split.major.len(), seed)?;
        let train = match &synthesis {
            Some(s) => rebalance(&split.major, &s.synthetic, seed)?,
            None => rebalance(&split.major, &split.minor, seed)?,
        };
        let model = fit_gbdt(
            &train,
            &GbdtConfig {
                seed: gbdt.seed.wrapping_add(seed),
                ..*gbdt
            },
        )?;
        let f1 = f1_minority(&model.predict(test), &truth, minority)?;
        let auc = auc(&model.predict_proba(test), &truth, minority)?;
        let (close, cov) = match &synthesis {
            Some(s) => {
                if dcr.is_none() {
                    let (h, d) = dcr_histogram(&test_minor, &s.synthetic, &encoder, DEFAULT_DCR_BINS)?;
                    dcr = Some(h);
                    dcr_distances = Some(d);
                }
                (
                    Some(close_probability(&split.minor_star, &s.synthetic, DEFAULT_ALPHA, &encoder)?),
                    Some(coverage(&split.minor_star, &s.synthetic, DEFAULT_COVERAGE_K, &encoder)?),
                )
            }
            None => (None, None),
        };
        log::info!("seed {seed}: f1 {f1:.4} auc {auc:.4}");
        per_seed.push(SeedScores {
            seed,
            f1,
            auc,
            close_probability: close,
            coverage: cov,
        });
        syntheses.push(synthesis);
    }
    let mean_of = |f: &dyn Fn(&SeedScores) -> Option<f64>| -> Option<f64> {
        let xs: Option<Vec<f64>> = per_seed.iter().map(f).collect();
        xs.map(|xs| mean_std(&xs).0)
    };
    let report = EvalReport {
        f1: mean_of(&|s| Some(s.f1)).expect("non-empty"),
        auc: mean_of(&|s| Some(s.auc)).expect("non-empty"),
        close_probability: mean_of(&|s| s.close_probability),
        coverage: mean_of(&|s| s.coverage),
        per_seed,
        dcr,
    };
    Ok(Evaluation {
        report,
        dcr_distances,
        syntheses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_fixture, make_imbalanced, split_train_test, ImbalanceSpec};
    use crate::oversample::{MethodName, OversampleConfig, Oversampler};

    struct Identity(Table);

    impl Oversample for Identity {
        fn oversample(&self, _: &Table, _: &Table, _: usize, _: u64) -> Result<Option<Synthesis>> {
            Ok(Some(Synthesis {
                synthetic: self.0.clone(),
                params: None,
                epoch_losses: Vec::new(),
            }))
        }
    }

    fn split() -> (ImbalancedSplit, Table) {
        let t = generate_fixture(250, 60, 3, 2, 5);
        let (train, test) = split_train_test(&t, 0.2, 1).unwrap();
        (make_imbalanced(&train, &ImbalanceSpec::new(0.2, 2).unwrap()).unwrap(), test)
    }

    #[test]
    fn identity_oversampler_is_perfectly_close() {
        let (s, test) = split();
        let ev = run_evaluation(&s, &test, &Identity(s.minor_star.clone()), &[0, 1, 2], &GbdtConfig::default()).unwrap();
        assert_eq!(ev.report.close_probability, Some(1.0));
        assert_eq!(ev.report.coverage, Some(1.0));
        assert_eq!(ev.report.per_seed.len(), 3);
        let h = ev.report.dcr.unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), test.filter_label("minor").len());
    }

    #[test]
    fn null_method_omits_synthetic_metrics() {
        let (s, test) = split();
        let null = Oversampler::from_name(MethodName::ImbalanceNull, &OversampleConfig::default());
        let ev = run_evaluation(&s, &test, &null, &[0], &GbdtConfig::default()).unwrap();
        let json = serde_json::to_value(&ev.report).unwrap();
        let obj = json.as_object().unwrap();
        assert!(obj.contains_key("f1") && obj.contains_key("auc") && obj.contains_key("per_seed"));
        assert!(!obj.contains_key("close_probability") && !obj.contains_key("coverage") && !obj.contains_key("dcr"));
        assert!((0.0..=1.0).contains(&ev.report.f1));
    }

    #[test]
    fn smote_reports_all_metrics() {
        let (s, test) = split();
        let m = Oversampler::from_name(MethodName::Smote, &OversampleConfig::default());
        let a = run_evaluation(&s, &test, &m, &[0, 1], &GbdtConfig::default()).unwrap().report;
        let b = run_evaluation(&s, &test, &m, &[0, 1], &GbdtConfig::default()).unwrap().report;
        assert_eq!(a, b);
        for v in [a.f1, a.auc, a.close_probability.unwrap(), a.coverage.unwrap()] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(a.dcr.is_some());
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
