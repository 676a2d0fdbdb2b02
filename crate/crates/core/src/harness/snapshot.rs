//! Inference-only copy of a trained agent: the policy and the cost critic.

use std::path::Path;

use ndarray::ArrayView1;
use rand_chacha::ChaCha8Rng;

use super::eval::DecisionPolicy;
use super::HarnessError;
use crate::nn::{CheckpointReader, CheckpointWriter, Mlp};
use crate::rl::{argmax, sample_index, Agent, Variant};
use crate::sim::Observation;
use crate::DiscreteAction;

const SNAPSHOT_VERSION: u32 = 0x5350_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub variant: Variant,
    pub seed: u64,
    pub step: u64,
    pub eta: f64,
    pub lambda: f64,
    pub xi: f64,
    pub policy: Mlp<f32>,
    pub cost_critic: Mlp<f32>,
}

impl PolicySnapshot {
    pub fn from_agent(agent: &Agent, variant: Variant, seed: u64, step: u64) -> Self {
        Self {
            variant,
            seed,
            step,
            eta: agent.eta,
            lambda: agent.lambda,
            xi: agent.xi(),
            policy: agent.policy.clone(),
            cost_critic: agent.qc.clone(),
        }
    }

    pub fn probabilities(&self, obs: &[f32]) -> Result<Vec<f32>, HarnessError> {
        let x = ArrayView1::from(obs).insert_axis(ndarray::Axis(0));
        Ok(self.policy.forward(x).map_err(crate::rl::RlError::from)?.row(0).to_vec())
    }

    pub fn cost_values(&self, obs: &[f32]) -> Result<Vec<f32>, HarnessError> {
        let x = ArrayView1::from(obs).insert_axis(ndarray::Axis(0));
        Ok(self.cost_critic.forward(x).map_err(crate::rl::RlError::from)?.row(0).to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = CheckpointWriter::new(SNAPSHOT_VERSION);
        w.str(self.variant.name());
        w.u64(self.seed);
        w.u64(self.step);
        w.f64(self.eta);
        w.f64(self.lambda);
        w.f64(self.xi);
        w.mlp(&self.policy);
        w.mlp(&self.cost_critic);
        w.finish()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, HarnessError> {
        let bad = |e: crate::nn::NnError| HarnessError::Parse(format!("snapshot: {e}"));
        let mut r = CheckpointReader::new(bytes).map_err(bad)?;
        if r.version() != SNAPSHOT_VERSION {
            return Err(HarnessError::Parse(format!("not a policy snapshot (version {:#x})", r.version())));
        }
        let variant = r.str().map_err(bad)?.parse().map_err(|e: crate::rl::RlError| HarnessError::Parse(e.to_string()))?;
        let snap = Self {
            variant,
            seed: r.u64().map_err(bad)?,
            step: r.u64().map_err(bad)?,
            eta: r.f64().map_err(bad)?,
            lambda: r.f64().map_err(bad)?,
            xi: r.f64().map_err(bad)?,
            policy: r.mlp().map_err(bad)?,
            cost_critic: r.mlp().map_err(bad)?,
        };
        if !r.is_exhausted() {
            return Err(HarnessError::Parse("trailing bytes in snapshot".into()));
        }
        Ok(snap)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        super::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(bytes)
    }

    pub fn greedy(&self) -> SnapshotPolicy<'_> {
        SnapshotPolicy { snapshot: self, greedy: true }
    }

    pub fn sampled(&self) -> SnapshotPolicy<'_> {
        SnapshotPolicy { snapshot: self, greedy: false }
    }
}

pub struct SnapshotPolicy<'a> {
    pub snapshot: &'a PolicySnapshot,
    pub greedy: bool,
}

impl DecisionPolicy for SnapshotPolicy<'_> {
    fn decide(&self, _obs: &Observation, flat: &[f32], rng: &mut ChaCha8Rng) -> Result<DiscreteAction, HarnessError> {
        let p = self.snapshot.probabilities(flat)?;
        let i = if self.greedy { argmax(&p) } else { sample_index(&p, rng) };
        Ok(DiscreteAction::from_index(i).expect("policy head has |A| outputs"))
    }
}
