//! Flat TOML run configuration.
//!
//! Every key is optional except `operator` for the commands that train or
//! evaluate a model. Unknown keys are rejected so typos surface early.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use vispinn_core::holder::{DEFAULT_PAIR_BUDGET, DEFAULT_TEMPERATURE};
use vispinn_core::loss::LossWeights;
use vispinn_core::network::Architecture;
use vispinn_core::operators::{by_name, OperatorSpec, OPERATOR_NAMES};
use vispinn_core::sampling::{Domain, DomainKind};
use vispinn_core::training::{Optimizer, TrainConfig};

use crate::error::CliError;

pub const OUT_ENV: &str = "VISPINN_OUT";
pub const DEFAULT_OUT: &str = "vispinn-out";

/// A single interior sample count or a list of them.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SampleCounts {
    One(usize),
    Many(Vec<usize>),
}

impl SampleCounts {
    pub fn values(&self) -> Vec<usize> {
        match self {
            SampleCounts::One(n) => vec![*n],
            SampleCounts::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub operator: Option<String>,
    /// Layer widths including input and output; defaults to `[d, 32, 32, 1]`.
    pub arch: Option<Vec<usize>>,
    pub m_r: SampleCounts,
    pub lambda_r: f64,
    pub lambda_b: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub seeds: Vec<u64>,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub steps: usize,
    pub temperature: f64,
    pub epsilon: f64,
    pub log_every: usize,
    /// Pair budget of the training-time seminorm estimate, 0 for all pairs.
    pub pair_budget: usize,
    pub gradient_check: bool,
    /// Probe grid nodes per axis for C0 errors; defaults to 257 in 1D and 129 otherwise.
    pub probe_resolution: Option<usize>,
    pub mc_samples: usize,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
    /// Trials for `verify`; each check has its own default.
    pub trials: Option<usize>,
    pub sampling_domain: DomainKind,
    pub sampling_n: Vec<usize>,
    pub sampling_dim: Vec<usize>,
    /// Sample sizes of the fill-distance slope fit.
    pub slope_n: Vec<usize>,
    /// Grid intervals per axis for oracle solutions.
    pub oracle_n: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            operator: None,
            arch: None,
            m_r: SampleCounts::One(256),
            lambda_r: 1.0,
            lambda_b: 1.0,
            alpha: 1.0,
            kappa: 1.0,
            seeds: vec![0],
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            steps: 1000,
            temperature: DEFAULT_TEMPERATURE,
            epsilon: 1e-3,
            log_every: 100,
            pair_budget: DEFAULT_PAIR_BUDGET,
            gradient_check: true,
            probe_resolution: None,
            mc_samples: 10_000,
            out: None,
            deterministic: false,
            trials: None,
            sampling_domain: DomainKind::Hypercube,
            sampling_n: vec![16, 100, 100, 1024],
            sampling_dim: vec![1, 1, 2, 2],
            slope_n: vec![16, 64, 256, 1024],
            oracle_n: 128,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
}

fn key_error(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("key `{key}`: {msg}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies overrides; the output directory is resolved as flag, then
    /// `VISPINN_OUT`, then the `out` key, then the default.
    pub fn apply(mut self, o: &Overrides, env_out: Option<PathBuf>) -> Self {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        self.out = o
            .out
            .clone()
            .or(env_out)
            .or(self.out)
            .or_else(|| Some(PathBuf::from(DEFAULT_OUT)));
        self.deterministic |= o.deterministic;
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn operator(&self) -> Result<OperatorSpec, CliError> {
        let name = self
            .operator
            .as_deref()
            .ok_or_else(|| CliError::Config("missing required key `operator`".into()))?;
        by_name(name).map_err(|_| {
            key_error(
                "operator",
                format!("unknown operator `{name}` (expected one of {})", OPERATOR_NAMES.join(", ")),
            )
        })
    }

    pub fn architecture(&self, spec: &OperatorSpec) -> Result<Architecture, CliError> {
        let widths = self
            .arch
            .clone()
            .unwrap_or_else(|| vec![spec.dim(), 32, 32, 1]);
        if widths.first() != Some(&spec.dim()) {
            return Err(key_error(
                "arch",
                format!("input width must equal the dimension {} of `{}`", spec.dim(), spec.name),
            ));
        }
        Architecture::new(widths).map_err(|e| key_error("arch", e))
    }

    pub fn weights(&self) -> Result<LossWeights, CliError> {
        LossWeights::new(self.lambda_r, self.lambda_b).map_err(|e| key_error("lambda_r/lambda_b", e))
    }

    pub fn seeds(&self) -> Result<&[u64], CliError> {
        if self.seeds.is_empty() {
            return Err(key_error("seeds", "must list at least one seed"));
        }
        Ok(&self.seeds)
    }

    pub fn sample_counts(&self) -> Result<Vec<usize>, CliError> {
        let v = self.m_r.values();
        if v.is_empty() || v.contains(&0) {
            return Err(key_error("m_r", "sample counts must be positive"));
        }
        Ok(v)
    }

    pub fn single_sample_count(&self) -> Result<usize, CliError> {
        match self.sample_counts()?.as_slice() {
            [n] => Ok(*n),
            _ => Err(key_error("m_r", "this command takes a single value")),
        }
    }

    pub fn probe_resolution(&self, dim: usize) -> usize {
        self.probe_resolution
            .unwrap_or(if dim == 1 { 257 } else { 129 })
    }

    pub fn train_config(&self, seed: u64, dim: usize) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            steps: self.steps,
            seed,
            kappa: self.kappa,
            alpha: self.alpha,
            temperature: self.temperature,
            epsilon: self.epsilon,
            deterministic: self.deterministic,
            log_every: self.log_every,
            pair_budget: (self.pair_budget > 0).then_some(self.pair_budget),
            gradient_check: self.gradient_check,
            probe_resolution: self.probe_resolution(dim),
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn sampling_cases(&self) -> Result<Vec<(Domain, usize)>, CliError> {
        if self.sampling_n.len() != self.sampling_dim.len() || self.sampling_n.is_empty() {
            return Err(key_error(
                "sampling_n",
                "must be nonempty and pair up with `sampling_dim`",
            ));
        }
        self.sampling_n
            .iter()
            .zip(&self.sampling_dim)
            .map(|(&n, &d)| {
                Domain::new(self.sampling_domain, d)
                    .map(|dom| (dom, n))
                    .map_err(|e| key_error("sampling_dim", e))
            })
            .collect()
    }
}
