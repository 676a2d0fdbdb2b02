//! One decision of the full stack: predict the raw action, shield it, assess
//! prediction-based risk for the executed action, then simulate the decision
//! period with the MPC re-planning every tick.

use serde::{Deserialize, Serialize};

use crate::action::DiscreteAction;
use crate::mpc::{DecisionTarget, MpcConfig, MpcController, MpcError, PredictedPoint, PredictedStates, PredictionBackend};
use crate::shield::{shield, ShieldConfig, ShieldOutcome, Situation};
use crate::sim::{assess_risk, EnvConfig, MergeEnv, Observation, RiskFlags, RiskInputs, SimError, StepSignal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mpc: MpcConfig,
    pub shield: ShieldConfig,
    pub shield_enabled: bool,
    pub backend: PredictionBackend,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mpc: MpcConfig::default(),
            shield: ShieldConfig::default(),
            shield_enabled: true,
            backend: PredictionBackend::Mpc,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.mpc.validate()?;
        self.shield.validate().map_err(PipelineError::InvalidConfig)?;
        if self.shield.horizon != self.mpc.horizon || (self.shield.dt - self.mpc.dt).abs() > 1e-12 {
            return Err(PipelineError::InvalidConfig("shield horizon and dt must match the MPC".into()));
        }
        Ok(())
    }
}

/// Everything that happened during one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Observation the decision was taken from.
    pub obs: Observation,
    pub raw: DiscreteAction,
    pub outcome: ShieldOutcome,
    /// Step-σ prediction of the raw action.
    pub raw_prediction: PredictedPoint,
    /// Step-σ prediction of the executed action.
    pub prediction: PredictedPoint,
    pub risk: RiskFlags,
    pub signal: StepSignal,
    pub next_obs: Observation,
}

impl Decision {
    pub fn safe(&self) -> DiscreteAction {
        self.outcome.safe_action
    }
}

#[derive(Clone)]
pub struct Pipeline {
    env: MergeEnv,
    mpc: MpcController,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(env: EnvConfig, config: PipelineConfig, seed: u64) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { env: MergeEnv::new(env, seed)?, mpc: MpcController::new(config.mpc)?, config })
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        self.env.reset(seed)
    }

    pub fn env(&self) -> &MergeEnv {
        &self.env
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn mpc(&self) -> &MpcController {
        &self.mpc
    }

    fn target(&self, action: DiscreteAction) -> DecisionTarget {
        DecisionTarget::new(self.env.ego(), action, self.env.geometry(), self.config.mpc.delta_v)
    }

    fn predict(&self, target: &DecisionTarget) -> Result<PredictedStates, PipelineError> {
        Ok(self.mpc.predict_with(self.config.backend, self.env.ego(), target, self.config.shield.sigma)?)
    }

    /// Shield verdict for `raw` in the current state, with the raw prediction.
    pub fn preview(&self, raw: DiscreteAction) -> Result<(ShieldOutcome, PredictedStates), PipelineError> {
        let pred = self.predict(&self.target(raw))?;
        let outcome = if self.config.shield_enabled {
            let neighbors = self.env.observed_vehicles();
            shield(raw, self.env.ego(), &pred, &neighbors, self.env.merged(), &self.config.shield)
        } else {
            ShieldOutcome { safe_action: raw, replaced: false, situation: Situation::None }
        };
        Ok((outcome, pred))
    }

    /// Runs one decision period. `on_tick` sees the environment after every
    /// simulation tick.
    pub fn decide(
        &mut self,
        raw: DiscreteAction,
        on_tick: &mut dyn FnMut(&MergeEnv),
    ) -> Result<Decision, PipelineError> {
        if self.env.is_done() {
            return Err(SimError::EpisodeTerminated.into());
        }
        let obs = self.env.observation();
        let (outcome, raw_pred) = self.preview(raw)?;
        let safe = outcome.safe_action;
        let target = self.target(safe);
        let pred = if safe == raw { raw_pred.clone() } else { self.predict(&target)? };

        let neighbors = self.env.observed_vehicles();
        let risk = assess_risk(&RiskInputs {
            ego: self.env.ego(),
            obs: &obs,
            prediction: &pred,
            neighbors: &neighbors,
            geometry: self.env.geometry(),
            unexpected: raw == DiscreteAction::Right && self.env.merged(),
        });

        let mpc = self.mpc;
        let mut controller = |ego: &_| mpc.execute(ego, &target).map_err(|e| SimError::Controller(e.to_string()));
        let (next_obs, signal) = self.env.step(safe, &risk, &mut controller, on_tick)?;
        Ok(Decision {
            obs,
            raw,
            outcome,
            raw_prediction: raw_pred.at_sigma(),
            prediction: pred.at_sigma(),
            risk,
            signal,
            next_obs,
        })
    }
}
