//! One driving session: environment, pending action and trace.

use onramp_core::harness::{
    finish_decision, policy_rng, trace_to_csv, DecisionPolicy, PolicySnapshot, TraceRow,
};
use onramp_core::pipeline::{Pipeline, PipelineConfig};
use onramp_core::shield::ShieldOutcome;
use onramp_core::sim::{EnvConfig, MergeEnv, TrafficConfig};
use onramp_core::DiscreteAction;
use rand_chacha::ChaCha8Rng;

use crate::protocol::{FrameMessage, Kinematics, SessionConfig, SessionMode, VehicleFrame};
use crate::BridgeError;

pub struct Session {
    id: u64,
    config: SessionConfig,
    pipeline: Pipeline,
    policy: Option<PolicySnapshot>,
    rng: ChaCha8Rng,
    pending: Option<DiscreteAction>,
    decision: u32,
    trace: Vec<TraceRow>,
}

impl Session {
    pub fn env_config(config: &SessionConfig) -> EnvConfig {
        let base = EnvConfig::default();
        EnvConfig { traffic: TrafficConfig { rho: config.density, ..base.traffic }, ..base }
    }

    pub fn pipeline_config(config: &SessionConfig) -> PipelineConfig {
        PipelineConfig { shield_enabled: config.shield, ..PipelineConfig::default() }
    }

    pub fn open(id: u64, config: SessionConfig) -> Result<Self, BridgeError> {
        let pipeline = Pipeline::new(Self::env_config(&config), Self::pipeline_config(&config), config.seed)
            .map_err(|e| BridgeError::Rejected(e.to_string()))?;
        let policy = match (config.mode, &config.snapshot) {
            (SessionMode::PolicyReplay, Some(path)) => {
                Some(PolicySnapshot::load(path).map_err(|e| BridgeError::Rejected(e.to_string()))?)
            }
            (SessionMode::PolicyReplay, None) => {
                return Err(BridgeError::Rejected("replay mode needs a snapshot".into()));
            }
            (SessionMode::Human, _) => None,
        };
        let rng = policy_rng(config.seed);
        Ok(Self { id, config, pipeline, policy, rng, pending: None, decision: 0, trace: Vec::new() })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn env(&self) -> &MergeEnv {
        self.pipeline.env()
    }

    /// Shield verdict `action` would get right now.
    pub fn preview(&self, action: DiscreteAction) -> Result<ShieldOutcome, BridgeError> {
        self.pipeline.preview(action).map(|(o, _)| o).map_err(|e| BridgeError::Internal(e.to_string()))
    }

    pub fn is_done(&self) -> bool {
        self.pipeline.env().is_done()
    }

    /// Stores `action` for the next decision; a later call in the same
    /// window replaces it.
    pub fn submit(&mut self, action: DiscreteAction) {
        self.pending = Some(action);
    }

    pub fn pending(&self) -> DiscreteAction {
        self.pending.unwrap_or(DiscreteAction::Idle)
    }

    /// Frame of the current state before any tick of the next decision.
    pub fn initial_frame(&self) -> FrameMessage {
        let env = self.pipeline.env();
        let u = env.last_control();
        let e = env.ego();
        FrameMessage {
            session_id: self.id,
            tick: env.tick(),
            sim_time_s: env.time(),
            vehicles: vehicles(env),
            last_action_raw: DiscreteAction::Idle,
            last_action_safe: DiscreteAction::Idle,
            situation: "NONE".into(),
            reward: 0.0,
            cost: 0.0,
            done_flags: env.last_info(),
            kinematics: Kinematics { v: e.v, accel: u.accel, steer: u.steer, yaw: e.phi },
        }
    }

    /// Runs one decision with the pending action (or the replayed policy's
    /// choice) and returns one frame per simulation tick.
    pub fn step_decision(&mut self) -> Result<Vec<FrameMessage>, BridgeError> {
        if self.is_done() {
            return Err(BridgeError::Ended(self.id));
        }
        let raw = match &self.policy {
            Some(snap) => {
                let obs = self.pipeline.env().observation();
                let flat = obs.flatten(self.pipeline.env().geometry());
                let p = if self.config.greedy { snap.greedy() } else { snap.sampled() };
                p.decide(&obs, &flat, &mut self.rng).map_err(|e| BridgeError::Internal(e.to_string()))?
            }
            None => self.pending.take().unwrap_or(DiscreteAction::Idle),
        };
        let start = self.trace.len();
        let (decision, id) = (self.decision, self.id);
        let mut vehicles_per_tick = Vec::new();
        let trace = &mut self.trace;
        let d = self
            .pipeline
            .decide(raw, &mut |env| {
                trace.push(TraceRow::from_tick(env, decision));
                vehicles_per_tick.push((env.tick(), vehicles(env)));
            })
            .map_err(|e| BridgeError::Internal(e.to_string()))?;
        finish_decision(&mut self.trace[start..], &d);
        self.decision += 1;
        let frames = self.trace[start..]
            .iter()
            .zip(vehicles_per_tick)
            .map(|(row, (tick, vehicles))| FrameMessage {
                session_id: id,
                tick,
                sim_time_s: row.t,
                vehicles,
                last_action_raw: row.action_raw,
                last_action_safe: row.action_safe,
                situation: row.situation.name().into(),
                reward: row.reward,
                cost: row.cost,
                done_flags: row.flags,
                kinematics: Kinematics { v: row.ego_v, accel: row.accel, steer: row.steer, yaw: row.ego_phi },
            })
            .collect();
        Ok(frames)
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn trace_csv(&self) -> String {
        trace_to_csv(&self.trace)
    }

    /// Steps until the episode ends, with `actions[k]` submitted before
    /// decision `k` (IDLE once the script runs out).
    pub fn run_script(&mut self, actions: &[DiscreteAction]) -> Result<Vec<FrameMessage>, BridgeError> {
        let mut frames = Vec::new();
        let mut k = 0;
        while !self.is_done() {
            if let Some(a) = actions.get(k) {
                self.submit(*a);
            }
            frames.extend(self.step_decision()?);
            k += 1;
        }
        Ok(frames)
    }
}

fn vehicles(env: &MergeEnv) -> Vec<VehicleFrame> {
    let e = env.ego();
    std::iter::once(VehicleFrame { id: 0, x: e.x, y: e.y, phi: e.phi, v: e.v, is_ego: true })
        .chain(env.traffic().iter().map(|t| VehicleFrame {
            id: t.id + 1,
            x: t.state.x,
            y: t.state.y,
            phi: t.state.phi,
            v: t.state.v,
            is_ego: false,
        }))
        .collect()
}
