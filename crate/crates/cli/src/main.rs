use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use onramp_core::harness::{
    cross_density_matrix, episodes_to_csv, evaluate, run_episode, sweep, theorem1_check, trace_to_csv, train_seed,
    PolicySnapshot, RunConfig, SweepParam,
};
use onramp_core::rl::{EpisodeMetrics, Variant};
use onramp_core::sim::DensityLabel;

#[derive(Parser)]
#[command(name = "onramp", version, about = "Safe RL for highway on-ramp merging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more seeds and write metrics and policy snapshots.
    Train(TrainArgs),
    /// Evaluate a policy snapshot.
    Eval(EvalArgs),
    /// Train every value of σ or η over the seed list.
    Sweep(SweepArgs),
    /// Cost limit inferred from density and driver risk.
    FuzzyEta(FuzzyArgs),
    /// Check the cost critic on logged shield replacements.
    Theorem1(EvalArgs),
    /// Evaluate snapshots trained at each density under every density.
    CrossDensity(CrossArgs),
    /// Run the session server for the driving client.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Spatial density ρ.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(d) = self.density {
            cfg.density = d;
        }
        if self.eta.is_some() {
            cfg.eta_override = self.eta;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(n) = self.steps {
            cfg.train_steps = n;
        }
        if let Some(n) = self.episodes {
            cfg.eval_episodes = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory; each seed gets `seed_{s}/`.
    #[arg(long)]
    out: PathBuf,
    /// Print rolling statistics every this many episodes (0 = silent).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    snapshot: PathBuf,
    /// Output directory for the report and episode table.
    #[arg(long)]
    out: PathBuf,
    /// Sample from π instead of taking its argmax, whatever the config says.
    #[arg(long)]
    sampled: bool,
    /// Also write per-tick traces of the first K episodes.
    #[arg(long, default_value_t = 0)]
    traces: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// `sigma` or `eta`.
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated values; the paper's grid when omitted.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuzzyArgs {
    /// Spatial density ρ.
    #[arg(long)]
    density: f64,
    /// Driver risk level in percent.
    #[arg(long)]
    risk: f64,
}

#[derive(Args)]
struct CrossArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// `label=path` for each trained density, e.g. `low=runs/low/policy.snap`.
    #[arg(long = "snapshot", required = true)]
    snapshots: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, default_value_t = 7878)]
    port: u16,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => run_sweep(a),
        Command::FuzzyEta(a) => {
            let eta = onramp_core::fuzzy::infer_cost_limit(a.density, a.risk)?;
            println!("{eta}");
            Ok(())
        }
        Command::Theorem1(a) => theorem1(a),
        Command::CrossDensity(a) => cross(a),
        Command::Serve(a) => onramp_bridge::serve(&a.bind, a.port).map_err(Into::into),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    write(&a.out.join("run.toml"), &cfg.to_toml())?;
    for &seed in &cfg.seeds {
        let dir = a.out.join(format!("seed_{seed}"));
        let start = Instant::now();
        let mut recent: Vec<EpisodeMetrics> = Vec::new();
        let mut on_episode = |m: &EpisodeMetrics| {
            if a.log_every == 0 {
                return;
            }
            recent.push(*m);
            if recent.len() == a.log_every {
                let n = recent.len() as f64;
                let avg = |f: fn(&EpisodeMetrics) -> f64| recent.iter().map(f).sum::<f64>() / n;
                eprintln!(
                    "[{} seed {seed}] {:>6.0}s step {:>7} goal {:.2} crash {:.2} cost {:.3} return {:.2} lambda {:.3} xi {:.4}",
                    cfg.variant,
                    start.elapsed().as_secs_f64(),
                    m.step,
                    avg(|m| m.goal as u8 as f64),
                    avg(|m| m.crash as u8 as f64),
                    avg(|m| m.episode_cost),
                    avg(|m| m.episode_return),
                    m.lambda,
                    m.xi
                );
                recent.clear();
            }
        };
        let run = train_seed(&cfg, seed, Some(&dir), &mut on_episode)?;
        eprintln!("[{} seed {seed}] done: {} episodes in {:.0}s", cfg.variant, run.metrics.len(), start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn load_snapshot(path: &Path) -> Result<PolicySnapshot> {
    PolicySnapshot::load(path).with_context(|| format!("loading {}", path.display()))
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let snap = load_snapshot(&a.snapshot)?;
    let policy = if a.sampled || !cfg.greedy_eval { snap.sampled() } else { snap.greedy() };
    let env = cfg.env();
    let stack = cfg.eval_pipeline();
    let ev = evaluate(&policy, &env, &stack, cfg.eval_episodes, cfg.eval_seed)?;
    write(&a.out.join("eval_report.json"), &serde_json::to_string_pretty(&ev.report)?)?;
    write(&a.out.join("eval_episodes.csv"), &episodes_to_csv(&ev.episodes))?;
    for s in ev.episodes.iter().take(a.traces) {
        let run = run_episode(&policy, &env, &stack, s.index, s.seed, true)?;
        let trace = run.trace.expect("trace requested");
        write(&a.out.join("traces").join(format!("episode_{:04}.csv", s.index)), &trace_to_csv(&trace))?;
    }
    println!("{}", serde_json::to_string(&ev.report)?);
    Ok(())
}

fn theorem1(a: EvalArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let snap = load_snapshot(&a.snapshot)?;
    let policy = if a.sampled || !cfg.greedy_eval { snap.sampled() } else { snap.greedy() };
    let ev = evaluate(&policy, &cfg.env(), &cfg.eval_pipeline(), cfg.eval_episodes, cfg.eval_seed)?;
    let report = theorem1_check(|obs| snap.cost_values(obs), &ev.replacements)?;
    write(&a.out.join("theorem1.json"), &serde_json::to_string_pretty(&report)?)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let values = a.values.unwrap_or_else(|| a.param.paper_values().to_vec());
    let result = sweep(a.param, &values, &cfg, Some(&a.out))?;
    print!("{}", result.ranking_csv());
    Ok(())
}

fn parse_label(s: &str) -> Result<DensityLabel> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "low" => DensityLabel::Low,
        "medium" => DensityLabel::Medium,
        "high" => DensityLabel::High,
        other => bail!("unknown density label `{other}`"),
    })
}

fn cross(a: CrossArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let mut loaded = Vec::new();
    for spec in &a.snapshots {
        let (label, path) = spec.split_once('=').context("expected label=path")?;
        loaded.push((parse_label(label)?, load_snapshot(Path::new(path))?));
    }
    let refs: Vec<_> = loaded.iter().map(|(d, s)| (*d, s)).collect();
    let densities = [DensityLabel::Low, DensityLabel::Medium, DensityLabel::High];
    let m = cross_density_matrix(&refs, &densities, &cfg.env(), &cfg.eval_pipeline(), cfg.eval_episodes, cfg.eval_seed, cfg.greedy_eval)?;
    write(&a.out.join("cross_density.csv"), &m.to_csv())?;
    print!("{}", m.to_csv());
    Ok(())
}
