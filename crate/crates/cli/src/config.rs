//! Experiment configuration: one TOML document describing the mixture
//! target, the source scheduler, the Bézier degree, training
//! hyperparameters, and the evaluation NFE list.

use std::path::Path;

use serde::Deserialize;

use bezsched_core::{
    GmmSpec, GridKind, Method, OptimizerKind, Scheduler, TrainConfig, DEFAULT_DEGREE,
};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: Option<String>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_eval_nfes")]
    pub eval_nfes: Vec<usize>,
    pub gmm: GmmSection,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub train: TrainSection,
}

fn default_degree() -> usize {
    DEFAULT_DEGREE
}

fn default_eval_nfes() -> Vec<usize> {
    vec![6, 8, 10]
}

/// Either a named preset or an explicit mixture.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmSection {
    pub preset: Option<String>,
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<Vec<f64>>>,
    pub variances: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default = "default_source_kind")]
    pub kind: String,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            kind: default_source_kind(),
        }
    }
}

fn default_source_kind() -> String {
    "linear".into()
}

/// Mirrors [`TrainConfig`] minus the seed, which comes from the top level.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub nfe: usize,
    pub method: Method,
    pub grid: GridKind,
    pub train_count: usize,
    pub val_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub rmsprop_momentum: f64,
    pub fd_step: f64,
    pub enable_decoupled: bool,
    pub lr_decoupled: f64,
    pub teacher_rtol: f64,
    pub teacher_atol: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            nfe: c.nfe,
            method: c.method,
            grid: c.grid_kind,
            train_count: c.train_count,
            val_count: c.val_count,
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
            optimizer: c.optimizer,
            rmsprop_momentum: c.rmsprop_momentum,
            fd_step: c.fd_step,
            enable_decoupled: c.enable_decoupled,
            lr_decoupled: c.lr_decoupled,
            teacher_rtol: c.teacher_rtol,
            teacher_atol: c.teacher_atol,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.eval_nfes.is_empty() {
            return Err(CliError::Config("eval_nfes must be nonempty".into()));
        }
        self.gmm_spec()?;
        self.source_scheduler()?;
        Ok(())
    }

    pub fn gmm_spec(&self) -> Result<GmmSpec, CliError> {
        match (&self.gmm.preset, &self.gmm.weights) {
            (Some(name), None) => match name.as_str() {
                "circle8" => Ok(GmmSpec::benchmark_circle8()),
                other => Err(CliError::Config(format!("unknown gmm preset {other:?}"))),
            },
            (None, Some(weights)) => {
                let means = self
                    .gmm
                    .means
                    .clone()
                    .ok_or_else(|| CliError::Config("gmm.means is required".into()))?;
                let variances = self
                    .gmm
                    .variances
                    .clone()
                    .ok_or_else(|| CliError::Config("gmm.variances is required".into()))?;
                GmmSpec::new(weights.clone(), means, variances)
                    .map_err(|e| CliError::Config(format!("gmm: {e}")))
            }
            (Some(_), Some(_)) => Err(CliError::Config(
                "gmm: give either a preset or explicit weights/means/variances, not both".into(),
            )),
            (None, None) => Err(CliError::Config(
                "gmm: needs a preset or explicit weights/means/variances".into(),
            )),
        }
    }

    pub fn source_scheduler(&self) -> Result<Scheduler, CliError> {
        match self.source.kind.as_str() {
            "linear" => Ok(Scheduler::linear()),
            "vp" => Ok(Scheduler::vp()),
            other => Err(CliError::Config(format!(
                "source.kind must be \"linear\" or \"vp\", got {other:?}"
            ))),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            nfe: self.train.nfe,
            method: self.train.method,
            grid_kind: self.train.grid,
            train_count: self.train.train_count,
            val_count: self.train.val_count,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            optimizer: self.train.optimizer,
            rmsprop_momentum: self.train.rmsprop_momentum,
            fd_step: self.train.fd_step,
            seed: self.seed,
            enable_decoupled: self.train.enable_decoupled,
            lr_decoupled: self.train.lr_decoupled,
            teacher_rtol: self.train.teacher_rtol,
            teacher_atol: self.train.teacher_atol,
        }
    }
}
