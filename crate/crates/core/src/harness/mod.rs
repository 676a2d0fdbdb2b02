//! Run configuration, evaluation protocol, sweeps and post-training checks.

mod analysis;
mod eval;
mod run;
mod snapshot;
mod trace;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pipeline::{PipelineConfig, PipelineError};
use crate::rl::{RlError, TrainConfig, Variant};
use crate::sim::{DensityLabel, EnvConfig, TrafficConfig};

pub use analysis::{
    cost_curve, final_average_cost, mean_curve, theorem1_check, CurvePoint, Theorem1Report,
};
pub use eval::{
    episode_seed, episodes_from_csv, episodes_to_csv, evaluate, policy_rng, run_episode, AgentPolicy, DecisionPolicy,
    EpisodeRun, EpisodeSummary, EvalReport, Evaluation, ReplacementEvent, SUCCESS_COST_BOUND,
};
pub use run::{
    cross_density_matrix, curves_to_csv, summarize_value, sweep, train_seed, DensityMatrix, SweepParam, SweepResult, SweepValue,
    TrainedRun,
};
pub use snapshot::{PolicySnapshot, SnapshotPolicy};
pub use trace::{finish_decision, trace_from_csv, trace_to_csv, TraceRow, TRACE_HEADER};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("fuzzy inference: {0}")]
    Fuzzy(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("replacement log is empty")]
    EmptyLog,
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// One experiment: a variant trained over several seeds and evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    /// Spatial density ρ of training and evaluation traffic.
    pub density: f64,
    /// Driver risk level in percent, fed to the fuzzy cost limit.
    pub risk_level: f64,
    /// Explicit cost limit; the fuzzy system decides when absent.
    pub eta_override: Option<f64>,
    pub seeds: Vec<u64>,
    pub train_steps: u64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Argmax of π during evaluation instead of sampling.
    pub greedy_eval: bool,
    /// Width in environment steps of the learning-curve bins.
    pub curve_window: u64,
    /// Everything else about training. Its variant, steps, η and density are
    /// overwritten from the fields above.
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SacdLtm,
            density: DensityLabel::Medium.nominal_rho(),
            risk_level: 50.0,
            eta_override: None,
            seeds: vec![1, 2, 3, 4, 5],
            train_steps: 100_000,
            eval_episodes: 400,
            eval_seed: 2024,
            greedy_eval: true,
            curve_window: 5_000,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn eta(&self) -> Result<f64, HarnessError> {
        match self.eta_override {
            Some(eta) => Ok(eta),
            None => crate::fuzzy::infer_cost_limit(self.density, self.risk_level).map_err(|e| HarnessError::Fuzzy(e.to_string())),
        }
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig { traffic: TrafficConfig { rho: self.density, ..self.train.env.traffic }, ..self.train.env }
    }

    pub fn train_config(&self) -> Result<TrainConfig, HarnessError> {
        Ok(TrainConfig {
            variant: self.variant,
            steps: self.train_steps,
            eta: self.eta()?,
            env: self.env(),
            ..self.train.clone()
        })
    }

    /// Stack used at evaluation: the variant's own shield and backend.
    pub fn eval_pipeline(&self) -> PipelineConfig {
        crate::rl::variant_pipeline(self.variant, &self.train.pipeline)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("at least one seed is required".into()));
        }
        if self.eval_episodes == 0 || self.curve_window == 0 {
            return Err(HarnessError::Invalid("eval_episodes and curve_window must be positive".into()));
        }
        if !(0.0..=100.0).contains(&self.risk_level) {
            return Err(HarnessError::Invalid(format!("risk level {} outside [0, 100]", self.risk_level)));
        }
        self.train_config()?.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trips_through_toml() {
        let cfg = RunConfig { eta_override: Some(0.01), seeds: vec![7], ..RunConfig::default() };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::from_toml("variant = \"SACD\"\nseeds = [3]\n[train.sac]\nbatch_size = 64\n").unwrap();
        assert_eq!(cfg.variant, Variant::Sacd);
        assert_eq!(cfg.train.sac.batch_size, 64);
        assert_eq!(cfg.train.sac.lr_policy, 1e-4);
        assert_eq!(cfg.train_steps, 100_000);
    }

    #[test]
    fn eta_comes_from_fuzzy_unless_overridden() {
        let cfg = RunConfig { density: 0.57, risk_level: 45.0, ..RunConfig::default() };
        let fuzzy = crate::fuzzy::infer_cost_limit(0.57, 45.0).unwrap();
        assert_eq!(cfg.eta().unwrap(), fuzzy);
        assert_eq!(RunConfig { eta_override: Some(0.2), ..cfg }.eta().unwrap(), 0.2);
    }

    #[test]
    fn invalid_run_configs_are_rejected() {
        assert!(RunConfig { seeds: vec![], ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig { density: 1.5, ..RunConfig::default() }.validate().is_err());
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
    }
}
