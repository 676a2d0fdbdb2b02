use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, SacConfig, UpdateStats};
use super::buffer::{ReplayBuffer, Transition};
use super::RlError;
use crate::mpc::PredictionBackend;
use crate::nn::{CheckpointReader, CheckpointWriter};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::sim::EnvConfig;
use crate::DiscreteAction;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Unconstrained, unshielded, one-step targets.
    Sacd,
    /// Lagrangian constraint only.
    SacdL,
    /// Constraint and MPC-predicted shield, one-step targets.
    SacdLm,
    /// Constraint, MPC-predicted shield and n-step targets.
    SacdLtm,
    /// As `SacdLtm` with constant-velocity ego prediction in the shield.
    SacdLSimple,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Sacd, Variant::SacdL, Variant::SacdLm, Variant::SacdLtm, Variant::SacdLSimple];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sacd => "SACD",
            Variant::SacdL => "SACD_L",
            Variant::SacdLm => "SACD_LM",
            Variant::SacdLtm => "SACD_LTM",
            Variant::SacdLSimple => "SACD_L_SIMPLE",
        }
    }

    pub fn constrained(self) -> bool {
        self != Variant::Sacd
    }

    pub fn shielded(self) -> bool {
        matches!(self, Variant::SacdLm | Variant::SacdLtm | Variant::SacdLSimple)
    }

    pub fn uses_n_step(self) -> bool {
        matches!(self, Variant::SacdLtm | Variant::SacdLSimple)
    }

    pub fn backend(self) -> PredictionBackend {
        if self == Variant::SacdLSimple {
            PredictionBackend::ConstantVelocity
        } else {
            PredictionBackend::Mpc
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = RlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| RlError::InvalidConfig(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Environment steps (decisions).
    pub steps: u64,
    /// Uniformly random actions and no updates for this many steps.
    pub warmup: u64,
    /// Environment steps per gradient step.
    pub update_every: u64,
    /// Window length for the n-step variants.
    pub n_step: usize,
    pub buffer_capacity: usize,
    /// Cost limit η.
    pub eta: f64,
    pub sac: SacConfig,
    pub env: EnvConfig,
    /// Base stack settings. The variant decides shielding and the prediction backend.
    pub pipeline: PipelineConfig,
    /// Checkpoint period in environment steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SacdLtm,
            steps: 100_000,
            warmup: 1000,
            update_every: 1,
            n_step: 3,
            buffer_capacity: 100_000,
            eta: 0.05,
            sac: SacConfig::default(),
            env: EnvConfig::default(),
            pipeline: PipelineConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn effective_n_step(&self) -> usize {
        if self.variant.uses_n_step() {
            self.n_step
        } else {
            1
        }
    }

    pub fn effective_sac(&self) -> SacConfig {
        SacConfig { constrained: self.variant.constrained(), ..self.sac.clone() }
    }

    pub fn effective_pipeline(&self) -> PipelineConfig {
        variant_pipeline(self.variant, &self.pipeline)
    }

    pub fn validate(&self) -> Result<(), RlError> {
        self.effective_sac().validate()?;
        if self.update_every == 0 || self.n_step == 0 || self.buffer_capacity == 0 {
            return Err(RlError::InvalidConfig("update period, n and buffer capacity must be positive".into()));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(RlError::InvalidConfig(format!("cost limit {} must be ≥ 0", self.eta)));
        }
        self.env.validate().map_err(crate::pipeline::PipelineError::from)?;
        self.effective_pipeline().validate()?;
        Ok(())
    }
}

/// The stack configuration a variant runs with.
pub fn variant_pipeline(variant: Variant, base: &PipelineConfig) -> PipelineConfig {
    PipelineConfig { shield_enabled: variant.shielded(), backend: variant.backend(), ..*base }
}

/// One row of the training metrics stream, written at every episode end.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeMetrics {
    pub episode: u64,
    /// Environment steps taken so far, including this episode.
    pub step: u64,
    pub episode_return: f64,
    pub episode_cost: f64,
    pub crash: bool,
    pub goal: bool,
    pub timed_out: bool,
    pub decisions: u32,
    pub replacements: u32,
    pub lambda: f64,
    pub xi: f64,
    pub updates: u64,
    /// Means over the gradient steps taken during the episode.
    pub q_loss: f64,
    pub qc_loss: f64,
    pub policy_loss: f64,
    pub entropy: f64,
    pub mean_qc: f64,
}

impl EpisodeMetrics {
    pub const CSV_HEADER: &'static str = "episode,step,episode_return,episode_cost,crash,goal,timed_out,decisions,replacements,lambda,xi,updates,q_loss,qc_loss,policy_loss,entropy,mean_qc";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.step,
            self.episode_return,
            self.episode_cost,
            self.crash as u8,
            self.goal as u8,
            self.timed_out as u8,
            self.decisions,
            self.replacements,
            self.lambda,
            self.xi,
            self.updates,
            self.q_loss,
            self.qc_loss,
            self.policy_loss,
            self.entropy,
            self.mean_qc
        )
    }

    pub fn parse_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 17 {
            return None;
        }
        let num = |i: usize| f[i].parse::<f64>().ok();
        let int = |i: usize| f[i].parse::<u64>().ok();
        Some(Self {
            episode: int(0)?,
            step: int(1)?,
            episode_return: num(2)?,
            episode_cost: num(3)?,
            crash: int(4)? == 1,
            goal: int(5)? == 1,
            timed_out: int(6)? == 1,
            decisions: int(7)? as u32,
            replacements: int(8)? as u32,
            lambda: num(9)?,
            xi: num(10)?,
            updates: int(11)?,
            q_loss: num(12)?,
            qc_loss: num(13)?,
            policy_loss: num(14)?,
            entropy: num(15)?,
            mean_qc: num(16)?,
        })
    }
}

pub fn metrics_to_csv(rows: &[EpisodeMetrics]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(EpisodeMetrics::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<EpisodeMetrics>, RlError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(EpisodeMetrics::CSV_HEADER) {
        return Err(RlError::InvalidConfig("metrics file has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| EpisodeMetrics::parse_csv_row(l).ok_or_else(|| RlError::InvalidConfig(format!("bad metrics row {}", i + 2))))
        .collect()
}

#[derive(Debug, Default)]
struct EpisodeAccum {
    ret: f64,
    cost: f64,
    decisions: u32,
    replacements: u32,
    updates: u32,
    sums: UpdateStats,
}

/// Streams of the run RNG. Each concern draws from its own stream so that,
/// for example, changing the batch size does not change episode seeds.
const STREAM_INIT: u64 = 0;
const STREAM_ACT: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_EPISODES: u64 = 3;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Single-threaded interaction and learning loop.
pub struct Trainer {
    config: TrainConfig,
    seed: u64,
    agent: Agent,
    buffer: ReplayBuffer,
    pipeline: Pipeline,
    rng_act: ChaCha8Rng,
    rng_batch: ChaCha8Rng,
    rng_episodes: ChaCha8Rng,
    step: u64,
    episode: u64,
    obs: Vec<f32>,
    acc: EpisodeAccum,
    metrics: Vec<EpisodeMetrics>,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self, RlError> {
        config.validate()?;
        let mut rng_episodes = stream(seed, STREAM_EPISODES);
        let mut pipeline = Pipeline::new(config.env, config.effective_pipeline(), 0)?;
        let first = pipeline.reset(rng_episodes.gen());
        let obs = first.flatten(&config.env.geometry);
        let agent = Agent::new(obs.len(), config.effective_sac(), config.eta, &mut stream(seed, STREAM_INIT))?;
        let buffer = ReplayBuffer::new(config.buffer_capacity, obs.len(), config.effective_n_step(), config.sac.gamma)?;
        Ok(Self {
            config,
            seed,
            agent,
            buffer,
            pipeline,
            rng_act: stream(seed, STREAM_ACT),
            rng_batch: stream(seed, STREAM_BATCH),
            rng_episodes,
            step: 0,
            episode: 0,
            obs,
            acc: EpisodeAccum::default(),
            metrics: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn metrics(&self) -> &[EpisodeMetrics] {
        &self.metrics
    }

    pub fn into_parts(self) -> (Agent, Vec<EpisodeMetrics>) {
        (self.agent, self.metrics)
    }

    /// One environment step followed by a gradient step when one is due.
    /// Returns the episode metrics when the step ended an episode.
    pub fn step_once(&mut self) -> Result<Option<EpisodeMetrics>, RlError> {
        let raw = if self.step < self.config.warmup {
            DiscreteAction::from_index(self.rng_act.gen_range(0..DiscreteAction::COUNT)).expect("index in range")
        } else {
            self.agent.act(&self.obs, false, &mut self.rng_act)?
        };
        let d = self.pipeline.decide(raw, &mut |_| {})?;
        let next = d.next_obs.flatten(&self.config.env.geometry);
        let sig = d.signal;
        self.buffer.push(Transition {
            s: std::mem::take(&mut self.obs),
            a_safe: d.safe().index(),
            r: sig.reward,
            c: sig.cost,
            s_next: next.clone(),
            done: sig.info.collided || sig.info.reached_goal,
            truncated: sig.info.timed_out,
        })?;
        self.obs = next;
        self.step += 1;
        self.acc.ret += sig.reward;
        self.acc.cost += sig.cost;
        self.acc.decisions += 1;
        self.acc.replacements += d.outcome.replaced as u32;

        if self.step > self.config.warmup && self.step % self.config.update_every == 0 && !self.buffer.is_empty() {
            let batch = self.buffer.sample(self.config.sac.batch_size, &mut self.rng_batch)?;
            let s = self.agent.update(&batch)?;
            let a = &mut self.acc.sums;
            a.q1_loss += 0.5 * (s.q1_loss + s.q2_loss);
            a.qc_loss += s.qc_loss;
            a.policy_loss += s.policy_loss;
            a.entropy += s.entropy;
            a.mean_qc += s.mean_qc;
            self.acc.updates += 1;
        }

        if !sig.done {
            return Ok(None);
        }
        let acc = std::mem::take(&mut self.acc);
        let n = acc.updates.max(1) as f64;
        let m = EpisodeMetrics {
            episode: self.episode,
            step: self.step,
            episode_return: acc.ret,
            episode_cost: acc.cost,
            crash: sig.info.collided,
            goal: sig.info.reached_goal,
            timed_out: sig.info.timed_out,
            decisions: acc.decisions,
            replacements: acc.replacements,
            lambda: self.agent.lambda,
            xi: self.agent.xi(),
            updates: self.agent.updates,
            q_loss: acc.sums.q1_loss / n,
            qc_loss: acc.sums.qc_loss / n,
            policy_loss: acc.sums.policy_loss / n,
            entropy: acc.sums.entropy / n,
            mean_qc: acc.sums.mean_qc / n,
        };
        self.metrics.push(m);
        self.episode += 1;
        let seed = self.rng_episodes.gen();
        self.obs = self.pipeline.reset(seed).flatten(&self.config.env.geometry);
        Ok(Some(m))
    }

    /// Runs the configured budget. Periodic checkpoints and, when a loss
    /// turns non-finite, a diagnostic checkpoint go to `out_dir` if given.
    pub fn run(&mut self, out_dir: Option<&Path>, on_episode: &mut dyn FnMut(&EpisodeMetrics)) -> Result<(), RlError> {
        while self.step < self.config.steps {
            match self.step_once() {
                Ok(Some(m)) => on_episode(&m),
                Ok(None) => {}
                Err(e @ RlError::NonFinite { .. }) => {
                    if let Some(dir) = out_dir {
                        self.save_checkpoint(&dir.join("diagnostic.ckpt"))?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
            let every = self.config.checkpoint_every;
            if let (Some(dir), true) = (out_dir, every > 0 && self.step % every == 0) {
                self.save_checkpoint(&dir.join(format!("step_{:07}.ckpt", self.step)))?;
            }
        }
        Ok(())
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut w = CheckpointWriter::new(CHECKPOINT_VERSION);
        w.str(self.config.variant.name());
        w.u64(self.seed);
        w.u64(self.step);
        w.u64(self.episode);
        self.agent.write(&mut w);
        w.finish()
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), RlError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| RlError::Io(e.to_string()))?;
        }
        std::fs::write(path, self.checkpoint_bytes()).map_err(|e| RlError::Io(e.to_string()))
    }
}

/// Contents of a trainer checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub variant: Variant,
    pub seed: u64,
    pub step: u64,
    pub episode: u64,
    pub agent: Agent,
}

impl Snapshot {
    pub fn from_bytes(bytes: Vec<u8>, sac: SacConfig) -> Result<Self, RlError> {
        let mut r = CheckpointReader::new(bytes)?;
        if r.version() != CHECKPOINT_VERSION {
            return Err(RlError::Checkpoint(format!("unsupported checkpoint version {}", r.version())));
        }
        let variant: Variant = r.str()?.parse()?;
        let (seed, step, episode) = (r.u64()?, r.u64()?, r.u64()?);
        let agent = Agent::read(&mut r, SacConfig { constrained: variant.constrained(), ..sac })?;
        if !r.is_exhausted() {
            return Err(RlError::Checkpoint("trailing bytes after agent state".into()));
        }
        Ok(Self { variant, seed, step, episode, agent })
    }

    pub fn load(path: &Path, sac: SacConfig) -> Result<Self, RlError> {
        let bytes = std::fs::read(path).map_err(|e| RlError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(bytes, sac)
    }
}

/// Trains one seed to completion and returns the final agent and metrics.
pub fn train(config: TrainConfig, seed: u64) -> Result<(Agent, Vec<EpisodeMetrics>), RlError> {
    let mut t = Trainer::new(config, seed)?;
    t.run(None, &mut |_| {})?;
    Ok(t.into_parts())
}
