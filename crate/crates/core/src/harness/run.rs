use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{cost_curve, final_average_cost, mean_curve, CurvePoint};
use super::eval::evaluate;
use super::snapshot::PolicySnapshot;
use super::{write_file, HarnessError, RunConfig};
use crate::pipeline::PipelineConfig;
use crate::rl::{metrics_to_csv, EpisodeMetrics, Trainer};
use crate::sim::{DensityLabel, EnvConfig, TrafficConfig};

/// Outcome of training one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun {
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
    pub snapshot: PolicySnapshot,
}

/// Trains `seed` under `cfg`. With `out_dir`, writes `metrics.csv`,
/// `policy.snap` and any periodic checkpoints there.
pub fn train_seed(
    cfg: &RunConfig,
    seed: u64,
    out_dir: Option<&Path>,
    on_episode: &mut dyn FnMut(&EpisodeMetrics),
) -> Result<TrainedRun, HarnessError> {
    let train = cfg.train_config()?;
    let variant = train.variant;
    let mut trainer = Trainer::new(train, seed)?;
    trainer.run(out_dir, on_episode)?;
    let steps = trainer.steps_taken();
    let (agent, metrics) = trainer.into_parts();
    let snapshot = PolicySnapshot::from_agent(&agent, variant, seed, steps);
    if let Some(dir) = out_dir {
        write_file(&dir.join("metrics.csv"), metrics_to_csv(&metrics).as_bytes())?;
        snapshot.save(&dir.join("policy.snap"))?;
    }
    Ok(TrainedRun { seed, metrics, snapshot })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Shield prediction step.
    Sigma,
    /// Cost limit.
    Eta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Eta => "eta",
        }
    }

    pub fn paper_values(self) -> &'static [f64] {
        match self {
            SweepParam::Sigma => &[1.0, 5.0, 10.0],
            SweepParam::Eta => &[0.1, 0.05, 0.01, 0.001],
        }
    }

    fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig, HarnessError> {
        let mut cfg = base.clone();
        match self {
            SweepParam::Sigma => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(HarnessError::Invalid(format!("sigma must be a positive integer, got {value}")));
                }
                cfg.train.pipeline.shield.sigma = value as usize;
            }
            SweepParam::Eta => cfg.eta_override = Some(value),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sigma" => Ok(SweepParam::Sigma),
            "eta" => Ok(SweepParam::Eta),
            other => Err(HarnessError::Invalid(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepValue {
    pub value: f64,
    pub curve: Vec<CurvePoint>,
    pub final_cost_per_seed: Vec<f64>,
    /// Seed mean of the final-window average cost.
    pub final_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
    /// Indices into `values`, lowest final cost first.
    pub ranking: Vec<usize>,
}

impl SweepResult {
    pub fn ranking_csv(&self) -> String {
        let mut out = format!("rank,{},final_cost\n", self.param.name());
        for (rank, &i) in self.ranking.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", rank + 1, self.values[i].value, self.values[i].final_cost));
        }
        out
    }
}

pub fn curves_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("step,average_cost,average_return,crash_rate,episodes\n");
    for p in curve {
        out.push_str(&format!("{},{},{},{},{}\n", p.step, p.average_cost, p.average_return, p.crash_rate, p.episodes));
    }
    out
}

/// Summarizes per-seed metrics for one sweep value.
pub fn summarize_value(value: f64, runs: &[Vec<EpisodeMetrics>], window: u64, total_steps: u64) -> SweepValue {
    let curves: Vec<_> = runs.iter().map(|m| cost_curve(m, window, total_steps)).collect();
    let finals: Vec<f64> = runs.iter().map(|m| final_average_cost(m, window)).collect();
    SweepValue {
        value,
        curve: mean_curve(&curves),
        final_cost: finals.iter().sum::<f64>() / finals.len() as f64,
        final_cost_per_seed: finals,
    }
}

fn rank(values: &[SweepValue]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].final_cost.total_cmp(&values[b].final_cost));
    idx
}

/// Trains every (value, seed) pair and emits one averaged curve per value.
/// With `out_dir`, each run lands in `{param}_{value}/seed_{s}/` and the
/// curves in `{param}_{value}.csv` next to `ranking.csv`.
pub fn sweep(param: SweepParam, values: &[f64], base: &RunConfig, out_dir: Option<&Path>) -> Result<SweepResult, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Invalid("sweep needs at least one value".into()));
    }
    let configs: Vec<RunConfig> = values.iter().map(|&v| param.apply(base, v)).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, u64)> = (0..values.len()).flat_map(|i| base.seeds.iter().map(move |&s| (i, s))).collect();
    let label = |v: f64| format!("{}_{}", param.name(), v);
    let runs: Vec<Vec<EpisodeMetrics>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let dir = out_dir.map(|d| d.join(label(values[i])).join(format!("seed_{seed}")));
            train_seed(&configs[i], seed, dir.as_deref(), &mut |_| {}).map(|r| r.metrics)
        })
        .collect::<Result<_, _>>()?;

    let per_value = base.seeds.len();
    let summaries: Vec<SweepValue> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| summarize_value(v, &runs[i * per_value..(i + 1) * per_value], base.curve_window, base.train_steps))
        .collect();
    let result = SweepResult { param, ranking: rank(&summaries), values: summaries };
    if let Some(dir) = out_dir {
        for v in &result.values {
            write_file(&dir.join(format!("{}.csv", label(v.value))), curves_to_csv(&v.curve).as_bytes())?;
        }
        write_file(&dir.join("ranking.csv"), result.ranking_csv().as_bytes())?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    /// Row labels: density each snapshot was trained on.
    pub trained: Vec<DensityLabel>,
    /// Column labels: density evaluated under.
    pub evaluated: Vec<DensityLabel>,
    pub success: Vec<Vec<f64>>,
}

impl DensityMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trained\\evaluated");
        for d in &self.evaluated {
            out.push(',');
            out.push_str(d.name());
        }
        out.push('\n');
        for (t, row) in self.trained.iter().zip(&self.success) {
            out.push_str(t.name());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates every snapshot under every density at its nominal ρ.
pub fn cross_density_matrix(
    snapshots: &[(DensityLabel, &PolicySnapshot)],
    densities: &[DensityLabel],
    env: &EnvConfig,
    stack: &PipelineConfig,
    episodes: usize,
    seed: u64,
    greedy: bool,
) -> Result<DensityMatrix, HarnessError> {
    let mut success = Vec::with_capacity(snapshots.len());
    for (_, snap) in snapshots {
        let policy = if greedy { snap.greedy() } else { snap.sampled() };
        let row = densities
            .iter()
            .map(|d| {
                let env = EnvConfig { traffic: TrafficConfig { rho: d.nominal_rho(), ..env.traffic }, ..*env };
                evaluate(&policy, &env, stack, episodes, seed).map(|e| e.report.success_rate)
            })
            .collect::<Result<Vec<_>, _>>()?;
        success.push(row);
    }
    Ok(DensityMatrix { trained: snapshots.iter().map(|(d, _)| *d).collect(), evaluated: densities.to_vec(), success })
}
