use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value as Json};

use super::config::{Prepared, RunConfig};
use super::logging;
use crate::data::{generate_fixture, write_csv, Table};
use crate::error::{Error, Result};
use crate::eval::{
    coverage, mean_std, per_step_entropy, run_evaluation, sample_set_entropy, Discretizer, EvalReport, MixedEncoder,
    DEFAULT_COVERAGE_K, ENTROPY_BINS,
};
use crate::lm::{save_checkpoint, CorpusSource, LMParams, SamplerConfig};
use crate::oversample::{
    build_prompt, finetune, finetune_corpus, generate_minority, ConditionStrategy, FinetuneSet, OversampleConfig,
    Oversampler,
};
use crate::rng;
use crate::textcodec::{Permutation, TokenSeq, Vocab, BOS};

pub const REPORT_FILE: &str = "report.json";
pub const DCR_FILE: &str = "dcr.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const ENTROPY_FILE: &str = "entropy.json";
pub const ECHO_FILE: &str = "config.echo.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.imblm";
pub const LOG_FILE: &str = "run.log";
pub const FAILED_FILE: &str = "FAILED";
pub const SENTENCES_FILE: &str = "sentences.txt";
pub const FIXTURE_DATA_FILE: &str = "data.csv";
pub const FIXTURE_SCHEMA_FILE: &str = "schema.json";

/// Creates `out`, logs into it, and leaves a `FAILED` marker (with the error
/// text) next to any partial artifacts if `body` fails.
fn in_out_dir<T>(out: &Path, body: impl FnOnce() -> Result<T>) -> Result<T> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let failed = out.join(FAILED_FILE);
    if failed.exists() {
        std::fs::remove_file(&failed).map_err(|e| Error::io(&failed, e))?;
    }
    logging::open(&out.join(LOG_FILE))?;
    let result = body();
    if let Err(e) = &result {
        log::error!("{e}");
        let _ = std::fs::write(&failed, format!("{e}\n"));
    }
    logging::close();
    result
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Encode(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Encode(format!("csv write failed: {e}")))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Sizes of the synthetic fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub n_major: usize,
    pub n_minor: usize,
    pub m_con: usize,
    pub m_cat: usize,
    pub seed: u64,
}

/// Writes the fixture CSV and its schema into `out`.
pub fn cmd_fixture(spec: &FixtureSpec, out: &Path) -> Result<()> {
    if spec.n_major == 0 || spec.n_minor == 0 || spec.m_con + spec.m_cat == 0 {
        return Err(Error::InvalidArgument(
            "fixture needs rows of both labels and at least one feature".into(),
        ));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let t = generate_fixture(spec.n_major, spec.n_minor, spec.m_con, spec.m_cat, spec.seed);
    write_csv(&t, &out.join(FIXTURE_DATA_FILE))?;
    write_text(&out.join(FIXTURE_SCHEMA_FILE), &(t.schema().to_json() + "\n"))
}

fn dump_sentences(cfg: &OversampleConfig, p: &Prepared, vocab: &Vocab, seed: u64, path: &Path) -> Result<()> {
    let corpus = finetune_corpus(cfg, &p.split.major, &p.split.minor, vocab, seed)?;
    let mut text = String::new();
    for seq in corpus.epoch_sequences(0) {
        let ids: Vec<_> = seq.iter().copied().filter(|&t| t != BOS && t != vocab.eos()).collect();
        text.push_str(&vocab.render(&ids));
        text.push('\n');
    }
    write_text(path, &text)
}

/// One evaluation of the configured method: `report.json`, `dcr.csv` (raw
/// distances of the first seed), `checkpoint.imblm` (model of the first seed)
/// and the expanded config echo.
pub fn cmd_run(cfg: &RunConfig, out: &Path, sentences: bool) -> Result<EvalReport> {
    in_out_dir(out, || {
        let p = cfg.prepare()?;
        let vocab = Vocab::build(&p.schema);
        let eff = cfg.expanded(&vocab)?;
        write_json(&out.join(ECHO_FILE), &eff)?;
        let method = eff.oversampler();
        if sentences {
            match &method {
                Oversampler::Llm(c) => dump_sentences(c, &p, &vocab, eff.seeds[0], &out.join(SENTENCES_FILE))?,
                _ => log::warn!("--dump-sentences ignored: {} does not fine-tune a model", eff.method.name()),
            }
        }
        log::info!("method {}, seeds {:?}", eff.method.name(), eff.seeds);
        let ev = run_evaluation(&p.split, &p.test, &method, &eff.seeds, &eff.gbdt)?;
        write_json(&out.join(REPORT_FILE), &ev.report)?;
        if let Some(d) = &ev.dcr_distances {
            let rows: Vec<Vec<String>> = d.iter().map(|x| vec![x.to_string()]).collect();
            write_rows(&out.join(DCR_FILE), &["distance".to_string()], &rows)?;
        }
        if let Some(params) = ev.syntheses.iter().flatten().find_map(|s| s.params.as_ref()) {
            save_checkpoint(params, &out.join(CHECKPOINT_FILE))?;
        }
        println!(
            "{}: F1 {:.4} ± {:.4}, AUC {:.4} ± {:.4} over {} seeds",
            eff.method.name(),
            ev.report.f1,
            ev.report.f1_std(),
            ev.report.auc,
            ev.report.auc_std(),
            eff.seeds.len()
        );
        Ok(ev.report)
    })
}

/// One cell of the strategy grid.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub label: &'static str,
    pub condition: ConditionStrategy,
    pub permutation: Permutation,
    pub finetune: FinetuneSet,
    pub result: std::result::Result<EvalReport, String>,
}

pub const CONDITIONS: [ConditionStrategy; 2] = [ConditionStrategy::ConditionY, ConditionStrategy::ConditionYx];
pub const PERMUTATIONS: [Permutation; 2] = [Permutation::PermuteXy, Permutation::FixY];
pub const FINETUNE_SETS: [FinetuneSet; 3] = [FinetuneSet::MajorMinor, FinetuneSet::MinorOnly, FinetuneSet::MinorInterpolate];

fn cell_label(c: ConditionStrategy, p: Permutation, f: FinetuneSet) -> &'static str {
    match (c, p, f) {
        (ConditionStrategy::ConditionYx, Permutation::FixY, FinetuneSet::MinorInterpolate) => "imbllm_full",
        (ConditionStrategy::ConditionY, Permutation::PermuteXy, FinetuneSet::MajorMinor) => "great_equiv",
        _ => "",
    }
}

/// Evaluates all twelve strategy combinations and writes `grid.csv`. A failing
/// cell is recorded in the `error` column and the grid continues.
pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<Vec<GridCell>> {
    in_out_dir(out, || {
        let p = cfg.prepare()?;
        let vocab = Vocab::build(&p.schema);
        let mut eff = cfg.clone();
        eff.oversample.lm = eff.oversample.lm_config(&vocab)?;
        write_json(&out.join(ECHO_FILE), &eff)?;
        let mut cells = Vec::new();
        for c in CONDITIONS {
            for perm in PERMUTATIONS {
                for f in FINETUNE_SETS {
                    log::info!("cell {} / {} / {}", c.name(), perm.name(), f.name());
                    let method = Oversampler::Llm(eff.oversample.with_strategy(c, perm, f));
                    let result = run_evaluation(&p.split, &p.test, &method, &eff.seeds, &eff.gbdt)
                        .map(|e| e.report)
                        .map_err(|e| e.to_string());
                    if let Err(e) = &result {
                        log::warn!("cell {} / {} / {} failed: {e}", c.name(), perm.name(), f.name());
                    }
                    cells.push(GridCell {
                        label: cell_label(c, perm, f),
                        condition: c,
                        permutation: perm,
                        finetune: f,
                        result,
                    });
                }
            }
        }
        let header: Vec<String> = [
            "label",
            "condition",
            "permutation",
            "finetune",
            "f1_mean",
            "f1_std",
            "auc_mean",
            "auc_std",
            "close_probability",
            "coverage",
            "error",
        ]
        .map(String::from)
        .to_vec();
        let rows: Vec<Vec<String>> = cells
            .iter()
            .map(|cell| {
                let mut r = vec![
                    cell.label.to_string(),
                    cell.condition.name().to_string(),
                    cell.permutation.name().to_string(),
                    cell.finetune.name().to_string(),
                ];
                match &cell.result {
                    Ok(rep) => r.extend([
                        rep.f1.to_string(),
                        rep.f1_std().to_string(),
                        rep.auc.to_string(),
                        rep.auc_std().to_string(),
                        opt(rep.close_probability),
                        opt(rep.coverage),
                        String::new(),
                    ]),
                    Err(e) => {
                        r.extend(std::iter::repeat_n(String::new(), 6));
                        r.push(e.clone());
                    }
                }
                r
            })
            .collect();
        write_rows(&out.join(GRID_FILE), &header, &rows)?;
        for cell in &cells {
            match &cell.result {
                Ok(rep) => println!(
                    "{:<12} {:<13} {:<11} {:<18} F1 {:.4} ± {:.4}",
                    cell.label,
                    cell.condition.name(),
                    cell.permutation.name(),
                    cell.finetune.name(),
                    rep.f1,
                    rep.f1_std()
                ),
                Err(e) => println!(
                    "{:<12} {:<13} {:<11} {:<18} failed: {e}",
                    cell.label,
                    cell.condition.name(),
                    cell.permutation.name(),
                    cell.finetune.name()
                ),
            }
        }
        Ok(cells)
    })
}

/// Sample counts for [`cmd_entropy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyOptions {
    /// Generated rows per sample-set entropy.
    pub samples: usize,
    /// Prompts per next-token entropy measurement.
    pub prompts: usize,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        EntropyOptions {
            samples: 500,
            prompts: 100,
        }
    }
}

fn series(xs: &[f64]) -> Json {
    json!({ "per_seed": xs, "mean": mean_std(xs).0 })
}

fn prompts(
    condition: ConditionStrategy,
    p: &Prepared,
    vocab: &Vocab,
    n: usize,
    seed: u64,
) -> Result<Vec<TokenSeq>> {
    let mut r = rng::stream(rng::derive_seed(seed, "prompts"));
    (0..n)
        .map(|_| build_prompt(condition, &p.schema, &p.split.minor, vocab, &mut r))
        .collect()
}

fn samples(params: &LMParams<f32>, cfg: &OversampleConfig, p: &Prepared, vocab: &Vocab, n: usize, seed: u64) -> Result<Table> {
    generate_minority(params, cfg, &p.schema, vocab, &p.split.minor, n, rng::derive_seed(seed, "entropy"))
}

/// Entropy comparisons, per seed:
///
/// - `prop1`: one `fix_y` / `minor_interpolate` model sampled with label-only
///   versus label-and-feature prompts;
/// - `prop2`: `fix_y` versus `permute_xy` training, both prompted with the
///   minority label only, compared at the first field-name position;
/// - `prop3`: `minor_only` versus `minor_interpolate` training, sampled with
///   the configured prompt strategy, with coverage against all training
///   minority rows.
///
/// Sample-set entropies discretize rows with bins fit on the training
/// minority rows.
pub fn cmd_entropy(cfg: &RunConfig, out: &Path, opts: &EntropyOptions) -> Result<Json> {
    in_out_dir(out, || {
        if opts.samples == 0 || opts.prompts == 0 {
            return Err(Error::InvalidArgument("samples and prompts must be positive".into()));
        }
        let p = cfg.prepare()?;
        let vocab = Vocab::build(&p.schema);
        let mut eff = cfg.clone();
        eff.oversample.lm = eff.oversample.lm_config(&vocab)?;
        write_json(&out.join(ECHO_FILE), &eff)?;
        let base = OversampleConfig {
            permutation: Permutation::FixY,
            finetune: FinetuneSet::MinorInterpolate,
            ..eff.oversample.clone()
        };
        let permuted = OversampleConfig {
            permutation: Permutation::PermuteXy,
            ..base.clone()
        };
        let minor_only = OversampleConfig {
            finetune: FinetuneSet::MinorOnly,
            ..base.clone()
        };
        let disc = Discretizer::fit(&p.split.minor_star, ENTROPY_BINS)?;
        let enc = MixedEncoder::fit(&p.split.minor_star)?;
        let scfg = SamplerConfig::with_temperature(base.temperature);
        let (major, minor) = (&p.split.major, &p.split.minor);

        let mut v: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
        let mut push = |k: &'static str, x: f64| v.entry(k).or_default().push(x);
        for &seed in &eff.seeds {
            log::info!("entropy seed {seed}");
            let (fix, _) = finetune(&base, major, minor, seed)?;
            let (perm, _) = finetune(&permuted, major, minor, seed)?;
            let (only, _) = finetune(&minor_only, major, minor, seed)?;

            for (key, step_key, condition) in [
                ("p1_y", "p1_y_step", ConditionStrategy::ConditionY),
                ("p1_yx", "p1_yx_step", ConditionStrategy::ConditionYx),
            ] {
                let c = OversampleConfig { condition, ..base.clone() };
                push(key, sample_set_entropy(&samples(&fix, &c, &p, &vocab, opts.samples, seed)?, &disc)?);
                let steps = per_step_entropy(&fix, &prompts(condition, &p, &vocab, opts.prompts, seed)?, &scfg, &vocab, seed)?;
                push(step_key, steps.mean_per_step_entropy);
            }

            let label_only = prompts(ConditionStrategy::ConditionY, &p, &vocab, opts.prompts, seed)?;
            for (key, step_key, params) in [("p2_fix", "p2_fix_step", &fix), ("p2_perm", "p2_perm_step", &perm)] {
                let steps = per_step_entropy(params, &label_only, &scfg, &vocab, seed)?;
                push(key, steps.first_field_entropy);
                push(step_key, steps.mean_per_step_entropy);
            }

            for (key, cov_key, params) in [("p3_only", "p3_only_cov", &only), ("p3_inter", "p3_inter_cov", &fix)] {
                let s = samples(params, &base, &p, &vocab, opts.samples, seed)?;
                push(key, sample_set_entropy(&s, &disc)?);
                push(cov_key, coverage(&p.split.minor_star, &s, DEFAULT_COVERAGE_K, &enc)?);
            }
        }
        let report = json!({
            "seeds": eff.seeds,
            "samples": opts.samples,
            "prompts": opts.prompts,
            "temperature": base.temperature,
            "prop1": {
                "condition_y": { "sample_set_entropy": series(&v["p1_y"]), "mean_per_step_entropy": series(&v["p1_y_step"]) },
                "condition_yx": { "sample_set_entropy": series(&v["p1_yx"]), "mean_per_step_entropy": series(&v["p1_yx_step"]) },
            },
            "prop2": {
                "fix_y": { "first_field_entropy": series(&v["p2_fix"]), "mean_per_step_entropy": series(&v["p2_fix_step"]) },
                "permute_xy": { "first_field_entropy": series(&v["p2_perm"]), "mean_per_step_entropy": series(&v["p2_perm_step"]) },
            },
            "prop3": {
                "minor_only": { "sample_set_entropy": series(&v["p3_only"]), "coverage": series(&v["p3_only_cov"]) },
                "minor_interpolate": { "sample_set_entropy": series(&v["p3_inter"]), "coverage": series(&v["p3_inter_cov"]) },
            },
        });
        write_json(&out.join(ENTROPY_FILE), &report)?;
        println!(
            "prop1 H(condition_yx) {:.4} vs H(condition_y) {:.4}; prop2 fix_y {:.4} vs permute_xy {:.4}; \
             prop3 H(minor_interpolate) {:.4} vs H(minor_only) {:.4}",
            mean_std(&v["p1_yx"]).0,
            mean_std(&v["p1_y"]).0,
            mean_std(&v["p2_fix"]).0,
            mean_std(&v["p2_perm"]).0,
            mean_std(&v["p3_inter"]).0,
            mean_std(&v["p3_only"]).0
        );
        Ok(report)
    })
}

/// The swept quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    /// Interpolation ratio, values in [0, 1].
    R,
    /// Imbalance ratio, values in (0, 1].
    Q,
}

/// One evaluation per value of `param`, consolidated into `grid.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path, param: SweepParam, values: &[f64]) -> Result<Vec<(f64, EvalReport)>> {
    in_out_dir(out, || {
        if values.is_empty() {
            return Err(Error::InvalidArgument("no sweep values given".into()));
        }
        for &x in values {
            let ok = match param {
                SweepParam::R => (0.0..=1.0).contains(&x),
                SweepParam::Q => x > 0.0 && x <= 1.0,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("sweep value {x} out of range for {param:?}")));
            }
        }
        let vocab = Vocab::build(&cfg.load_schema()?);
        write_json(&out.join(ECHO_FILE), &cfg.expanded(&vocab)?)?;
        let mut results = Vec::new();
        for &x in values {
            let mut c = cfg.clone();
            match param {
                SweepParam::R => c.oversample.r = x,
                SweepParam::Q => c.q = x,
            }
            log::info!("sweep {param:?} = {x}");
            let p = c.prepare()?;
            let ev = run_evaluation(&p.split, &p.test, &c.oversampler(), &c.seeds, &c.gbdt)?;
            println!("{param:?} = {x}: F1 {:.4} ± {:.4}", ev.report.f1, ev.report.f1_std());
            results.push((x, ev.report));
        }
        let mut header: Vec<String> = ["value", "f1_mean", "f1_std", "auc_mean"].map(String::from).to_vec();
        header.extend(cfg.seeds.iter().map(|s| format!("f1_seed{s}")));
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|(x, rep)| {
                let mut r = vec![x.to_string(), rep.f1.to_string(), rep.f1_std().to_string(), rep.auc.to_string()];
                r.extend(rep.per_seed.iter().map(|s| s.f1.to_string()));
                r
            })
            .collect();
        write_rows(&out.join(GRID_FILE), &header, &rows)?;
        Ok(results)
    })
}
