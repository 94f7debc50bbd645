//! Command-line front end: argument parsing, config resolution and the
//! subcommands.

mod commands;
mod config;
mod logging;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

pub use commands::{
    cmd_ablate, cmd_entropy, cmd_fixture, cmd_run, cmd_sweep, EntropyOptions, FixtureSpec, GridCell, SweepParam,
    CHECKPOINT_FILE, CONDITIONS, DCR_FILE, ECHO_FILE, ENTROPY_FILE, FAILED_FILE, FINETUNE_SETS, FIXTURE_DATA_FILE,
    FIXTURE_SCHEMA_FILE, GRID_FILE, LOG_FILE, PERMUTATIONS, REPORT_FILE, SENTENCES_FILE,
};
pub use config::{Prepared, RunConfig};

use crate::error::Result;
use crate::oversample::{ConditionStrategy, DecodeMode, FinetuneSet, MethodName};
use crate::textcodec::Permutation;

#[derive(Debug, Parser)]
#[command(name = "imbllm", version, about = "Language-model oversampling for imbalanced tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic fixture (data.csv, schema.json).
    Fixture(FixtureArgs),
    /// Evaluate one oversampling method over the seeds.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the first seed's fine-tuning sentences to sentences.txt.
        #[arg(long)]
        dump_sentences: bool,
    },
    /// Evaluate all twelve prompt/permutation/corpus combinations.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Entropy comparisons of prompt strategy, permutation and corpus.
    Entropy {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        prompts: usize,
    },
    /// Evaluate the method for each value of r or q.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 400)]
    pub major: usize,
    #[arg(long, default_value_t = 100)]
    pub minor: usize,
    #[arg(long, default_value_t = 4)]
    pub con: usize,
    #[arg(long, default_value_t = 2)]
    pub cat: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value `{s}`"))
}

/// Flags shared by the evaluation commands. Each one overrides the matching
/// config-file value.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Comma-separated evaluation seeds.
    #[arg(long, alias = "seed", value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = parse_name::<MethodName>)]
    pub method: Option<MethodName>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = parse_name::<ConditionStrategy>)]
    pub condition: Option<ConditionStrategy>,
    #[arg(long, value_parser = parse_name::<Permutation>)]
    pub permutation: Option<Permutation>,
    #[arg(long, value_parser = parse_name::<FinetuneSet>)]
    pub finetune: Option<FinetuneSet>,
    #[arg(long, value_parser = parse_name::<DecodeMode>)]
    pub decode_mode: Option<DecodeMode>,
}

impl CommonArgs {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let o = &mut c.oversample;
        macro_rules! set {
            ($($flag:ident => $target:expr),* $(,)?) => {$(
                if let Some(v) = self.$flag.clone() {
                    $target = v;
                }
            )*};
        }
        set! {
            seeds => c.seeds,
            method => c.method,
            q => c.q,
            r => o.r,
            temperature => o.temperature,
            epochs => o.train.epochs,
            lr => o.train.learning_rate,
            condition => o.condition,
            permutation => o.permutation,
            finetune => o.finetune,
            decode_mode => o.decode_mode,
        }
        if self.data.is_some() {
            c.data = self.data.clone();
        }
        if self.schema.is_some() {
            c.schema = self.schema.clone();
        }
        Ok(c)
    }
}

/// Runs one command; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Fixture(a) => cmd_fixture(
            &FixtureSpec {
                n_major: a.major,
                n_minor: a.minor,
                m_con: a.con,
                m_cat: a.cat,
                seed: a.seed,
            },
            &a.out,
        ),
        Command::Run { common, dump_sentences } => {
            common.resolve().and_then(|c| cmd_run(&c, &common.out, dump_sentences).map(drop))
        }
        Command::Ablate { common } => common.resolve().and_then(|c| cmd_ablate(&c, &common.out).map(drop)),
        Command::Entropy {
            common,
            samples,
            prompts,
        } => common
            .resolve()
            .and_then(|c| cmd_entropy(&c, &common.out, &EntropyOptions { samples, prompts }).map(drop)),
        Command::Sweep { common, param, values } => {
            common.resolve().and_then(|c| cmd_sweep(&c, &common.out, param, &values).map(drop))
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
