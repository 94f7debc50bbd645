//! Command-level behaviour with a tiny model: artifacts, exit codes, config
//! echo, sweeps and the strategy grid.

use std::path::{Path, PathBuf};

use imbllm::cli::*;
use imbllm::lm::{load_checkpoint, LMConfig, TrainConfig};
use imbllm::oversample::{MethodName, OversampleConfig};

fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = FixtureSpec {
        n_major: 500,
        n_minor: 125,
        m_con: 4,
        m_cat: 2,
        seed: 7,
    };
    cmd_fixture(&spec, dir).unwrap();
    (dir.join(FIXTURE_DATA_FILE), dir.join(FIXTURE_SCHEMA_FILE))
}

fn tiny(dir: &Path, method: MethodName) -> RunConfig {
    let (data, schema) = fixture(&dir.join("fixture"));
    RunConfig {
        data: Some(data),
        schema: Some(schema),
        method,
        seeds: vec![0],
        oversample: OversampleConfig {
            lm: LMConfig {
                d_model: 16,
                n_heads: 2,
                d_k: 8,
                d_ff: 32,
                n_layers: 1,
                ..LMConfig::default()
            },
            train: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            ..OversampleConfig::default()
        },
        ..RunConfig::default()
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn fixture_is_reproducible_and_creates_directories() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a/b");
    let code = run_cli(["imbllm", "fixture", "--major", "400", "--minor", "100", "--con", "4", "--cat", "2", "--seed", "7", "-o"]
        .map(String::from)
        .into_iter()
        .chain([a.display().to_string()]));
    assert_eq!(code, 0);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names, [FIXTURE_DATA_FILE, FIXTURE_SCHEMA_FILE]);
    let first = (read(&a.join(FIXTURE_DATA_FILE)), read(&a.join(FIXTURE_SCHEMA_FILE)));
    assert_eq!(read(&a.join(FIXTURE_DATA_FILE)).lines().count(), 501);
    assert_eq!(
        run_cli(["imbllm", "fixture", "--major", "400", "--minor", "100", "--seed", "7", "-o", a.to_str().unwrap()]),
        0
    );
    assert_eq!(first, (read(&a.join(FIXTURE_DATA_FILE)), read(&a.join(FIXTURE_SCHEMA_FILE))));
}

#[test]
fn null_and_smote_reports() {
    let d = tempfile::tempdir().unwrap();
    let null = cmd_run(&tiny(d.path(), MethodName::ImbalanceNull), &d.path().join("null"), false).unwrap();
    assert!(null.close_probability.is_none() && null.coverage.is_none() && null.dcr.is_none());
    let json: serde_json::Value = serde_json::from_str(&read(&d.path().join("null").join(REPORT_FILE))).unwrap();
    assert!(json.get("f1").is_some() && json.get("auc").is_some() && json.get("coverage").is_none());
    assert!(!d.path().join("null").join(CHECKPOINT_FILE).exists());

    let smote = cmd_run(&tiny(d.path(), MethodName::Smote), &d.path().join("smote"), false).unwrap();
    for v in [smote.f1, smote.auc, smote.close_probability.unwrap(), smote.coverage.unwrap()] {
        assert!((0.0..=1.0).contains(&v));
    }
    let dcr = read(&d.path().join("smote").join(DCR_FILE));
    assert_eq!(dcr.lines().count(), 1 + 25);
}

#[test]
fn llm_run_writes_artifacts_and_echo_reproduces_it() {
    let d = tempfile::tempdir().unwrap();
    let cfg = tiny(d.path(), MethodName::Imbllm);
    let a = d.path().join("a");
    cmd_run(&cfg, &a, true).unwrap();
    for f in [REPORT_FILE, DCR_FILE, ECHO_FILE, CHECKPOINT_FILE, LOG_FILE, SENTENCES_FILE] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    assert!(!a.join(FAILED_FILE).exists());
    let (_, lm) = load_checkpoint(&a.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(lm.d_model, 16);
    let sentences = read(&a.join(SENTENCES_FILE));
    assert_eq!(sentences.lines().count(), 420);
    assert!(sentences.lines().all(|l| l.starts_with("label is minor")));

    let b = d.path().join("b");
    let code = run_cli(["imbllm", "run", "--config", a.join(ECHO_FILE).to_str().unwrap(), "-o", b.to_str().unwrap()]);
    assert_eq!(code, 0);
    for f in [REPORT_FILE, DCR_FILE, ECHO_FILE, CHECKPOINT_FILE] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn failure_leaves_marker_and_nonzero_exit() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = tiny(d.path(), MethodName::Smote);
    cfg.data = Some(d.path().join("missing.csv"));
    let out = d.path().join("out");
    assert!(cmd_run(&cfg, &out, false).is_err());
    assert!(read(&out.join(FAILED_FILE)).contains("missing.csv"));

    cfg = tiny(d.path(), MethodName::Smote);
    cmd_run(&cfg, &out, false).unwrap();
    assert!(!out.join(FAILED_FILE).exists());

    let code = run_cli(["imbllm", "run", "-o", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(run_cli(["imbllm", "run", "--bogus"]), 2);
}

#[test]
fn r_sweep_matches_inter_run_and_q_one_keeps_all_minority() {
    let d = tempfile::tempdir().unwrap();
    let cfg = tiny(d.path(), MethodName::Imbllm);
    let rows = cmd_sweep(&cfg, &d.path().join("r"), SweepParam::R, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
    let grid = read(&d.path().join("r").join(GRID_FILE));
    assert_eq!(grid.lines().count(), 1 + 5);
    assert!(grid.starts_with("value,f1_mean,f1_std,auc_mean,f1_seed0\n"));
    let inter = cmd_run(
        &RunConfig {
            method: MethodName::ImbllmInter,
            ..cfg.clone()
        },
        &d.path().join("inter"),
        false,
    )
    .unwrap();
    assert_eq!(rows[0].1, inter);

    let q1 = RunConfig {
        q: 1.0,
        method: MethodName::Smote,
        ..cfg.clone()
    };
    let p = q1.prepare().unwrap();
    assert_eq!(p.split.minor.len(), p.split.minor_star.len());
    let qs = cmd_sweep(&q1, &d.path().join("q"), SweepParam::Q, &[0.2, 1.0]).unwrap();
    assert_eq!(qs.len(), 2);
    assert!(cmd_sweep(&cfg, &d.path().join("bad"), SweepParam::Q, &[0.0]).is_err());
}

#[test]
fn ablation_grid_has_twelve_labelled_rows() {
    let d = tempfile::tempdir().unwrap();
    let cfg = tiny(d.path(), MethodName::Imbllm);
    let cells = cmd_ablate(&cfg, &d.path().join("g")).unwrap();
    assert_eq!(cells.len(), 12);
    assert!(cells.iter().all(|c| c.result.is_ok()));
    let grid = read(&d.path().join("g").join(GRID_FILE));
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines.len(), 13);
    assert_eq!(lines.iter().filter(|l| l.starts_with("imbllm_full,condition_yx,fix_y,minor_interpolate,")).count(), 1);
    assert_eq!(lines.iter().filter(|l| l.starts_with("great_equiv,condition_y,permute_xy,major_minor,")).count(), 1);

    let again = cmd_ablate(&cfg, &d.path().join("g2")).unwrap();
    assert_eq!(grid, read(&d.path().join("g2").join(GRID_FILE)));
    let full = |cs: &[GridCell]| cs.iter().find(|c| c.label == "imbllm_full").unwrap().result.clone().unwrap();
    assert_eq!(full(&cells), full(&again));
}

#[test]
fn entropy_report_has_three_blocks() {
    let d = tempfile::tempdir().unwrap();
    let cfg = tiny(d.path(), MethodName::Imbllm);
    let opts = EntropyOptions { samples: 20, prompts: 5 };
    let e = cmd_entropy(&cfg, &d.path().join("e"), &opts).unwrap();
    for (block, variants) in [
        ("prop1", ["condition_y", "condition_yx"]),
        ("prop2", ["fix_y", "permute_xy"]),
        ("prop3", ["minor_only", "minor_interpolate"]),
    ] {
        for v in variants {
            let stats = e[block][v].as_object().unwrap();
            for s in stats.values() {
                assert_eq!(s["per_seed"].as_array().unwrap().len(), 1);
                assert!(s["mean"].is_f64());
            }
        }
    }
    cmd_entropy(&cfg, &d.path().join("e2"), &opts).unwrap();
    assert_eq!(read(&d.path().join("e").join(ENTROPY_FILE)), read(&d.path().join("e2").join(ENTROPY_FILE)));
}
