use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, make_imbalanced, split_train_test, ImbalanceSpec, ImbalancedSplit, Schema, Table};
use crate::error::{Error, Result};
use crate::eval::GbdtConfig;
use crate::oversample::{MethodName, OversampleConfig, Oversampler};
use crate::textcodec::Vocab;

/// Everything a command needs besides the output directory. Every field has a
/// default, so a config file may list only the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub method: MethodName,
    /// Imbalance ratio: fraction of the training minority kept.
    pub q: f64,
    pub imbalance_seed: u64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub seeds: Vec<u64>,
    pub oversample: OversampleConfig,
    pub gbdt: GbdtConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            schema: None,
            method: MethodName::Imbllm,
            q: 0.2,
            imbalance_seed: 0,
            test_fraction: 0.2,
            split_seed: 0,
            seeds: vec![0, 1, 2],
            oversample: OversampleConfig::default(),
            gbdt: GbdtConfig::default(),
        }
    }
}

/// Loaded, split and imbalanced data.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: Schema,
    pub split: ImbalancedSplit,
    pub test: Table,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.data.is_none() || self.schema.is_none() {
            return Err(Error::InvalidArgument("both a data CSV and a schema JSON are required".into()));
        }
        ImbalanceSpec::new(self.q, self.imbalance_seed)?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        self.oversample.validate()
    }

    pub fn load_schema(&self) -> Result<Schema> {
        let path = self.schema.as_deref().ok_or_else(|| Error::InvalidArgument("no schema given".into()))?;
        Schema::load(path)
    }

    /// Loads the data, splits off the test set and imbalances the training set.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let schema = self.load_schema()?;
        let table = load_csv(self.data.as_deref().expect("validated"), &schema)?;
        let (train, test) = split_train_test(&table, self.test_fraction, self.split_seed)?;
        let split = make_imbalanced(&train, &ImbalanceSpec::new(self.q, self.imbalance_seed)?)?;
        log::info!(
            "prepared {} major, {} minor ({} before imbalancing), {} test rows",
            split.major.len(),
            split.minor.len(),
            split.minor_star.len(),
            test.len()
        );
        Ok(Prepared { schema, split, test })
    }

    /// The config with the method's strategy and the vocabulary size filled
    /// into `oversample`, i.e. exactly what runs.
    pub fn expanded(&self, vocab: &Vocab) -> Result<RunConfig> {
        let mut out = self.clone();
        if let Oversampler::Llm(cfg) = Oversampler::from_name(self.method, &self.oversample) {
            let lm = cfg.lm_config(vocab)?;
            out.oversample = OversampleConfig { lm, ..cfg };
        }
        Ok(out)
    }

    pub fn oversampler(&self) -> Oversampler {
        Oversampler::from_name(self.method, &self.oversample)
    }
}
