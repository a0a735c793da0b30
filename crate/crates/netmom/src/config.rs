//! Experiment configuration file (TOML).
//!
//! ```toml
//! [data]
//! prices = ["prices.csv"]          # one or more price files
//! contracts = "contracts.csv"
//! calendar = "intersection"        # or "union"
//! cache = "panel.json"             # optional, defaults to <output>/panel.json
//!
//! [windows]                        # all optional, inclusive ISO dates
//! train_start = "2002-06-03"
//! train_end = "2024-06-28"
//! oos_start = "2005-01-03"
//! oos_end = "2024-06-28"
//!
//! [strategy]                       # any StrategyConfig field; omitted ones keep their defaults
//! lookback = 132
//!
//! [experiment]
//! models = ["MACD", "NMM-LEVY-E"]
//! n_resamples = 100
//! expected_block_length = 22.0
//! seed = 0
//! hyper = { "NMM-LEVY-E" = [1.0, 10.0] }   # optional fixed (alpha, beta); others are grid searched
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use netmom_core::bootstrap::{BootstrapConfig, DEFAULT_BLOCK_LENGTH, DEFAULT_RESAMPLES};
use netmom_core::graph::GraphHyperParams;
use netmom_core::market::CalendarPolicy;
use netmom_core::model::{ModelKind, StrategyConfig};
use netmom_core::Date;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    #[serde(default)]
    pub windows: Windows,
    #[serde(default)]
    pub strategy: StrategyConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub prices: Vec<PathBuf>,
    pub contracts: PathBuf,
    #[serde(default)]
    pub calendar: CalendarPolicy,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

/// Training (hyperparameter search) and out-of-sample windows. They are
/// independent and may overlap.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Windows {
    pub train_start: Option<Date>,
    pub train_end: Option<Date>,
    pub oos_start: Option<Date>,
    pub oos_end: Option<Date>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<String>,
    #[serde(default = "default_resamples")]
    pub n_resamples: usize,
    #[serde(default = "default_block_length")]
    pub expected_block_length: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub resample_length: Option<usize>,
    #[serde(default)]
    pub hyper: BTreeMap<String, [f64; 2]>,
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

fn default_block_length() -> f64 {
    DEFAULT_BLOCK_LENGTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

impl Config {
    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(AppError::io(path))?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Parses and validates without touching the filesystem; `origin` is
    /// used in diagnostics only.
    pub fn parse(text: &str, origin: &Path) -> AppResult<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| AppError::Config {
            path: origin.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate().map_err(|message| AppError::Config { path: origin.to_path_buf(), message })?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.data.prices.iter_mut().for_each(join);
        join(&mut self.data.contracts);
        if let Some(c) = self.data.cache.as_mut() {
            join(c);
        }
        join(&mut self.output.dir);
    }

    fn validate(&self) -> Result<(), String> {
        if self.data.prices.is_empty() {
            return Err("data.prices: at least one price file is required".into());
        }
        self.models().map_err(|e| format!("experiment.models: {e}"))?;
        for name in self.experiment.hyper.keys() {
            let m: ModelKind = name.parse().map_err(|e| format!("experiment.hyper: {e}"))?;
            if m == ModelKind::Macd {
                return Err("experiment.hyper: the baseline takes no alpha/beta".into());
            }
        }
        for (name, [a, b]) in &self.experiment.hyper {
            self.strategy.graph_params(*a, *b).validate().map_err(|e| format!("experiment.hyper.{name}: {e}"))?;
        }
        self.strategy.validate().map_err(|e| format!("strategy: {e}"))?;
        self.bootstrap().validate().map_err(|e| format!("experiment: {e}"))?;
        let w = &self.windows;
        for (label, s, e) in [("train", w.train_start, w.train_end), ("oos", w.oos_start, w.oos_end)] {
            if let (Some(s), Some(e)) = (s, e) {
                if e < s {
                    return Err(format!("windows.{label}_end {e} is before {label}_start {s}"));
                }
            }
        }
        Ok(())
    }

    /// Parsed model list, deduplicated in order of first appearance.
    pub fn models(&self) -> Result<Vec<ModelKind>, netmom_core::Error> {
        if self.experiment.models.is_empty() {
            return Err(netmom_core::Error::InvalidParameter("model list is empty".into()));
        }
        let mut out: Vec<ModelKind> = Vec::new();
        for name in &self.experiment.models {
            let m = name.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            n_resamples: self.experiment.n_resamples,
            expected_block_length: self.experiment.expected_block_length,
            seed: self.experiment.seed,
            resample_length: self.experiment.resample_length,
        }
    }

    /// Fixed hyperparameters for `model`, if the config pins them.
    pub fn fixed_hyper(&self, model: ModelKind) -> Option<GraphHyperParams> {
        self.experiment
            .hyper
            .iter()
            .find(|(k, _)| k.parse::<ModelKind>().ok() == Some(model))
            .map(|(_, [a, b])| self.strategy.graph_params(*a, *b))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.data.cache.clone().unwrap_or_else(|| self.output.dir.join("panel.json"))
    }

    /// SHA-256 of the resolved configuration in canonical JSON form. The
    /// output directory is left out since it does not affect results.
    pub fn checksum(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
