//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Unit-level criteria are computed here. Training criteria read the desk
//! experiment under `results/desk` (override with `ONRAMP_RESULTS_DIR`),
//! produced by `scripts/desk.sh`, and spot-check the recorded evaluations
//! against fresh rollouts of the saved snapshots.
//!
//! A criterion that cannot be evaluated (missing or inconsistent artifacts,
//! errors, panics) always fails the run. A training outcome that is evaluated
//! and misses its bound prints FAIL but only fails the run when
//! `ONRAMP_ACCEPTANCE_STRICT` is set.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use onramp_core::fuzzy::FuzzySystem;
use onramp_core::harness::{
    episode_seed, episodes_from_csv, final_average_cost, run_episode, PolicySnapshot, RunConfig, Theorem1Report,
};
use onramp_core::mpc::{
    bicycle_rhs, discretize, linearize, solve_qp, BicycleParams, ControlInput, PredictedPoint, PredictedStates, QpProblem,
};
use onramp_core::nn::{Head, Mlp, MlpSpec};
use onramp_core::rl::{
    aggregate_window, cost_critic_loss, critic_loss, lambda_loss, lambda_update, metrics_from_csv, n_step_targets,
    one_step_target, policy_loss_lagrangian, temperature_loss, EpisodeMetrics,
};
use onramp_core::shield::{shield, ShieldConfig, ShieldOutcome, Situation};
use onramp_core::sim::{Lane, VehicleState};
use onramp_core::DiscreteAction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
struct Failure {
    detail: String,
    /// The criterion was evaluated and missed its bound.
    missed: bool,
}

impl From<String> for Failure {
    fn from(detail: String) -> Self {
        Self { detail, missed: false }
    }
}

type Check = Result<String, Failure>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(Failure { detail, missed: true })
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).ancestors().nth(2).expect("workspace root").to_path_buf()
}

fn results_dir() -> PathBuf {
    std::env::var_os("ONRAMP_RESULTS_DIR").map(PathBuf::from).unwrap_or_else(|| workspace().join("results/desk"))
}

fn desk_config() -> Result<RunConfig, String> {
    RunConfig::load(&workspace().join("configs/desk.toml")).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------- fuzzy

fn fuzzy_worked_example() -> Check {
    let sys = FuzzySystem::default();
    let start = Instant::now();
    let eta = sys.infer_cost_limit(0.57, 45.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    ensure((eta - 0.0595).abs() <= 0.005 && elapsed < 1.0, format!("eta {eta:.5} (target 0.0595 ± 0.005) in {elapsed:.3} ms"))
}

fn fuzzy_rule_corners() -> Check {
    let sys = FuzzySystem::default();
    // Crisp inputs with full membership in exactly one set.
    let density = [("high", 1.0), ("medium", 0.75), ("low", 0.5)];
    let risk = [("conservative", 10.0), ("neutral", 50.0), ("aggressive", 90.0)];
    let table = [["small", "small", "medium"], ["small", "medium", "large"], ["medium", "large", "large"]];
    let labels = sys.cost_limit.labels();
    let mut wrong = Vec::new();
    for (i, (r_label, r)) in risk.iter().enumerate() {
        for (j, (d_label, d)) in density.iter().enumerate() {
            let inf = sys.infer(*d, *r).map_err(|e| e.to_string())?;
            let dominant = (0..inf.activations.len()).max_by(|&a, &b| inf.activations[a].total_cmp(&inf.activations[b])).unwrap();
            if labels[dominant] != table[i][j] {
                wrong.push(format!("{r_label}/{d_label} -> {} (want {})", labels[dominant], table[i][j]));
            }
        }
    }
    ensure(wrong.is_empty(), if wrong.is_empty() { "9/9 corners match".into() } else { wrong.join("; ") })
}

// ---------------------------------------------------------------- mpc

fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.gen_range(1..=20);
    let rank = rng.gen_range(1..=n);
    let m = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
    let hessian = &m * m.transpose() * (2.0 / rank as f64);
    let gradient = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let lower = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..0.0));
    let upper = DVector::from_fn(n, |i, _| lower[i] + rng.gen_range(0.1..3.0));
    QpProblem { hessian, gradient, lower, upper }
}

fn clamp_into(p: &QpProblem, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].clamp(p.lower[i], p.upper[i]))
}

/// Accelerated projected gradient with a 1/L step, run to stagnation.
fn projected_gradient_oracle(p: &QpProblem) -> DVector<f64> {
    let l = p.hessian.clone().symmetric_eigenvalues().max().max(1e-12);
    let mut x = clamp_into(p, &DVector::zeros(p.gradient.len()));
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad = &p.hessian * &y + &p.gradient;
        let next = clamp_into(p, &(&y - grad / l));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        let moved = (&next - &x).amax();
        x = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

fn objective(p: &QpProblem, x: &DVector<f64>) -> f64 {
    0.5 * (x.transpose() * &p.hessian * x)[(0, 0)] + p.gradient.dot(x)
}

fn kkt(p: &QpProblem, x: &DVector<f64>) -> f64 {
    let grad = &p.hessian * x + &p.gradient;
    (x - clamp_into(p, &(x - grad))).norm()
}

fn qp_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let problems: Vec<QpProblem> = (0..100).map(|_| random_qp(&mut rng)).collect();
    let start = Instant::now();
    let solutions = problems.iter().map(solve_qp).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let (mut gap, mut residual) = (0.0f64, 0.0f64);
    for (p, s) in problems.iter().zip(&solutions) {
        let oracle = projected_gradient_oracle(p);
        gap = gap.max(objective(p, &s.x) - objective(p, &oracle));
        residual = residual.max(kkt(p, &s.x));
    }
    ensure(
        gap <= 1e-6 && residual <= 1e-8 && elapsed < 1.0,
        format!("max gap {gap:.2e}, max KKT {residual:.2e}, solver time {elapsed:.3} s"),
    )
}

fn linearization() -> Check {
    let p = BicycleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..100 {
        let state = [rng.gen_range(0.0..300.0), rng.gen_range(-6.0..2.0), rng.gen_range(0.0..35.0), rng.gen_range(-0.5..0.5)];
        let u = ControlInput { accel: rng.gen_range(-4.0..4.0), steer: rng.gen_range(-p.delta_max..p.delta_max) };
        let (a, b) = linearize(state[2], state[3], u.steer, &p);
        let mut a_fd = DMatrix::zeros(4, 4);
        for j in 0..4 {
            let (mut hi, mut lo) = (state, state);
            hi[j] += h;
            lo[j] -= h;
            let (fh, fl) = (bicycle_rhs(&hi, u, &p), bicycle_rhs(&lo, u, &p));
            for i in 0..4 {
                a_fd[(i, j)] = (fh[i] - fl[i]) / (2.0 * h);
            }
        }
        let mut b_fd = DMatrix::zeros(4, 2);
        for j in 0..2 {
            let bump = |d: f64| if j == 0 { ControlInput { accel: u.accel + d, ..u } } else { ControlInput { steer: u.steer + d, ..u } };
            let (fh, fl) = (bicycle_rhs(&state, bump(h), &p), bicycle_rhs(&state, bump(-h), &p));
            for i in 0..4 {
                b_fd[(i, j)] = (fh[i] - fl[i]) / (2.0 * h);
            }
        }
        let a_dyn = DMatrix::from_iterator(4, 4, a.iter().copied());
        let b_dyn = DMatrix::from_iterator(4, 2, b.iter().copied());
        worst = worst.max((&a_dyn - &a_fd).norm() / a_fd.norm().max(1e-12));
        worst = worst.max((&b_dyn - &b_fd).norm() / b_fd.norm().max(1e-12));

        let dt = rng.gen_range(0.01..0.5);
        let (ak, bk) = discretize(&a, &b, dt);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 + a[(i, j)] * dt } else { a[(i, j)] * dt };
                exact &= ak[(i, j)] == want;
            }
            for j in 0..2 {
                exact &= bk[(i, j)] == b[(i, j)] * dt;
            }
        }
    }
    ensure(worst <= 1e-5 && exact, format!("max rel err {worst:.2e}; discretization identity exact: {exact}"))
}

// ---------------------------------------------------------------- losses

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / scale.max(1e-10)
}

fn fd_params(net: &Mlp<f64>, loss: impl Fn(&Mlp<f64>) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..net.params.len())
        .map(|i| {
            let mut plus = net.clone();
            plus.params.set(i, net.params.get(i) + h);
            let mut minus = net.clone();
            minus.params.set(i, net.params.get(i) - h);
            (loss(&plus) - loss(&minus)) / (2.0 * h)
        })
        .collect()
}

fn gradient_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (dim, batch) = (6, 8);
    let s = Array2::from_shape_fn((batch, dim), |_| rng.gen_range(-1.0..1.0));
    let actions: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..5)).collect();
    let targets = Array1::from_shape_fn(batch, |_| rng.gen_range(-2.0..2.0));
    let q_min = Array2::from_shape_fn((batch, 5), |_| rng.gen_range(-2.0..2.0));
    let q_c = Array2::from_shape_fn((batch, 5), |_| rng.gen_range(0.0..1.0));
    let (xi, lambda) = (0.3, 1.7);

    let policy = Mlp::<f64>::new(MlpSpec::new(dim, &[10, 10], 5, Head::Softmax), &mut rng).unwrap();
    let critic = Mlp::<f64>::new(MlpSpec::new(dim, &[10, 10], 5, Head::Linear), &mut rng).unwrap();
    let cost_critic = Mlp::<f64>::new(MlpSpec::new(dim, &[10, 10], 5, Head::Linear), &mut rng).unwrap();

    let mut errs = Vec::new();
    let pl = policy_loss_lagrangian(&policy, s.view(), &q_min, &q_c, xi, lambda).unwrap();
    let fd = fd_params(&policy, |n| policy_loss_lagrangian(n, s.view(), &q_min, &q_c, xi, lambda).unwrap().loss);
    errs.push(("policy", rel_err(&pl.grads.iter().copied().collect::<Vec<_>>(), &fd)));

    let cl = critic_loss(&critic, s.view(), &actions, targets.view()).unwrap();
    let fd = fd_params(&critic, |n| critic_loss(n, s.view(), &actions, targets.view()).unwrap().loss);
    errs.push(("critic", rel_err(&cl.grads.iter().copied().collect::<Vec<_>>(), &fd)));

    let cc = cost_critic_loss(&cost_critic, s.view(), &actions, targets.view()).unwrap();
    let fd = fd_params(&cost_critic, |n| cost_critic_loss(n, s.view(), &actions, targets.view()).unwrap().loss);
    errs.push(("cost critic", rel_err(&cc.grads.iter().copied().collect::<Vec<_>>(), &fd)));

    let h = 1e-6;
    let target = 0.6 * 5f64.ln();
    let log_xi = xi.ln();
    let (_, d) = temperature_loss(&pl.pi, &pl.log_pi, log_xi, target);
    let fd = (temperature_loss(&pl.pi, &pl.log_pi, log_xi + h, target).0 - temperature_loss(&pl.pi, &pl.log_pi, log_xi - h, target).0) / (2.0 * h);
    errs.push(("temperature", rel_err(&[d], &[fd])));

    let q_taken: Vec<f64> = cc.taken.to_vec();
    let (_, d) = lambda_loss(&q_taken, 0.05, lambda);
    let fd = (lambda_loss(&q_taken, 0.05, lambda + h).0 - lambda_loss(&q_taken, 0.05, lambda - h).0) / (2.0 * h);
    errs.push(("lambda", rel_err(&[d], &[fd])));

    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    ensure(worst <= 1e-4, detail)
}

fn n_step_reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let (r, c) = (rng.gen_range(-5.0..5.0), rng.gen_range(0.0..1.0));
        let (v, vc) = (rng.gen_range(-50.0..50.0), rng.gen_range(0.0..10.0));
        let gamma = rng.gen_range(0.5..1.0);
        let done = rng.gen_bool(0.3);
        let (t, tc) = n_step_targets(&[(r, c)], done, v, vc, gamma, 1);
        let (ret, cost, g) = aggregate_window(&[(r, c)], gamma, done);
        let want = one_step_target(r, gamma, done, v);
        let want_c = one_step_target(c, gamma, done, vc);
        let same = [t, ret + g * v].iter().all(|x| x.to_bits() == want.to_bits())
            && [tc, cost + g * vc].iter().all(|x| x.to_bits() == want_c.to_bits());
        mismatches += !same as usize;
    }
    let (q, _) = n_step_targets(&[(1.0f64, 0.0); 3], false, 0.0, 0.0, 0.9, 3);
    let hand = 1.0 + 0.9 + 0.9 * 0.9;
    ensure(
        mismatches == 0 && q == hand && (q - 2.71).abs() < 1e-15,
        format!("{mismatches} n=1 mismatches in 10000; three-step example {q}"),
    )
}

// ---------------------------------------------------------------- shield

fn pred(x: f64, y: f64) -> PredictedStates {
    PredictedStates { points: vec![PredictedPoint { x, y, v: 20.0, phi: 0.0 }; 10], sigma: 5, dt: 0.1 }
}

fn shield_table_and_idempotence() -> Check {
    let cfg = ShieldConfig::default();
    let ramp_ego = VehicleState::new(100.0, -5.0, 20.0, 0.0, Lane::Ramp);
    let behind = [VehicleState::new(90.0, -1.0, 22.0, 0.0, Lane::Main)];
    let abreast = [VehicleState::new(103.0, 0.0, 20.5, 0.0, Lane::Main)];
    let merged_ego = VehicleState::new(160.0, 0.0, 20.0, 0.0, Lane::Main);
    use DiscreteAction::*;
    let cases = [
        ("S1", shield(Left, &ramp_ego, &pred(102.0, -2.0), &behind, false, &cfg), Slower, Situation::S1CollisionLeft),
        ("S2", shield(Right, &merged_ego, &pred(162.0, 0.0), &[], true, &cfg), Idle, Situation::S2UnexpectedRight),
        ("S3", shield(Faster, &ramp_ego, &pred(110.0, -5.0), &abreast, false, &cfg), Slower, Situation::S3CannotMerge),
        ("pass", shield(Faster, &ramp_ego, &pred(104.0, -5.0), &[], false, &cfg), Faster, Situation::None),
    ];
    let mut wrong = Vec::new();
    for (name, out, safe, situation) in cases {
        let want = ShieldOutcome { safe_action: safe, replaced: situation != Situation::None, situation };
        if out != want {
            wrong.push(format!("{name}: {out:?}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut replaced, mut violations, mut left_out) = (0, 0, 0);
    for _ in 0..10_000 {
        let merged = rng.gen_bool(0.4);
        let ego_y = if merged { rng.gen_range(-1.0..1.0) } else { rng.gen_range(-6.0..-3.0) };
        let ego = VehicleState::new(rng.gen_range(50.0..200.0), ego_y, rng.gen_range(5.0..30.0), rng.gen_range(-0.2..0.2), if merged { Lane::Main } else { Lane::Ramp });
        let neighbors: Vec<VehicleState> = (0..rng.gen_range(0..6))
            .map(|_| VehicleState::new(ego.x + rng.gen_range(-40.0..40.0), rng.gen_range(-1.0..4.0), rng.gen_range(5.0..30.0), 0.0, Lane::Main))
            .collect();
        let p = pred(ego.x + rng.gen_range(0.0..15.0), ego.y + rng.gen_range(-1.0..4.0));
        let raw = DiscreteAction::ALL[rng.gen_range(0..5)];
        let once = shield(raw, &ego, &p, &neighbors, merged, &cfg);
        let twice = shield(once.safe_action, &ego, &p, &neighbors, merged, &cfg);
        replaced += once.replaced as usize;
        violations += (twice.safe_action != once.safe_action || twice.replaced) as usize;
        left_out += (once.replaced && once.safe_action == Left) as usize;
    }
    ensure(
        wrong.is_empty() && violations == 0 && left_out == 0,
        format!(
            "table {}; idempotence violations {violations}/10000 ({replaced} replacements exercised)",
            if wrong.is_empty() { "4/4".to_string() } else { wrong.join("; ") }
        ),
    )
}

fn lambda_dynamics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut lambda = 1.0f64;
    let mut bad = 0;
    for k in 0..1000 {
        if k % 100 == 0 {
            lambda = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..5.0) };
        }
        let eta = rng.gen_range(0.01..0.2);
        let batch: Vec<f64> = (0..rng.gen_range(1..64)).map(|_| rng.gen_range(0.0..0.4)).collect();
        let mean = batch.iter().sum::<f64>() / batch.len() as f64;
        let next = lambda_update(&batch, eta, lambda, rng.gen_range(1e-3..1e-1));
        bad += ((next > lambda) != (mean > eta) || next < 0.0) as usize;
        lambda = next;
    }
    ensure(bad == 0, format!("{bad} violations in 1000 steps; final lambda {lambda:.4}"))
}

// ---------------------------------------------------------------- desk experiment

fn seed_dirs(variant: &str) -> Result<Vec<PathBuf>, String> {
    let cfg = desk_config()?;
    let root = results_dir().join(variant);
    let dirs: Vec<PathBuf> = cfg.seeds.iter().map(|s| root.join(format!("seed_{s}"))).collect();
    match dirs.iter().find(|d| !d.join("policy.snap").exists()) {
        Some(missing) => Err(format!("no finished run in {}", missing.display())),
        None => Ok(dirs),
    }
}

fn metrics(dir: &Path) -> Result<Vec<EpisodeMetrics>, String> {
    metrics_from_csv(&read(&dir.join("metrics.csv"))?).map_err(|e| e.to_string())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn desk_cost_ordering() -> Check {
    let window = desk_config()?.curve_window;
    let final_costs = |variant: &str| -> Result<Vec<f64>, String> {
        seed_dirs(variant)?.iter().map(|d| Ok(final_average_cost(&metrics(d)?, window))).collect()
    };
    let (ltm, sacd) = (final_costs("SACD_LTM")?, final_costs("SACD")?);
    let (a, b) = (mean(&ltm), mean(&sacd));
    ensure(a < b, format!("final average cost over the last {window} steps: SACD_LTM {a:.4} vs SACD {b:.4}"))
}

fn desk_success_rate() -> Check {
    let cfg = desk_config()?;
    let env = cfg.env();
    let stack = cfg.eval_pipeline();
    let mut rates = Vec::new();
    for dir in seed_dirs("SACD_LTM")? {
        let episodes = episodes_from_csv(&read(&dir.join("eval_episodes.csv"))?).map_err(|e| e.to_string())?;
        if episodes.len() != cfg.eval_episodes {
            return Err(format!("{}: {} episodes recorded, expected {}", dir.display(), episodes.len(), cfg.eval_episodes).into());
        }
        // Replay a few recorded episodes from the snapshot.
        let snap = PolicySnapshot::load(&dir.join("policy.snap")).map_err(|e| e.to_string())?;
        let policy = if cfg.greedy_eval { snap.greedy() } else { snap.sampled() };
        for e in episodes.iter().step_by(cfg.eval_episodes / 4) {
            assert_eq!(e.seed, episode_seed(cfg.eval_seed, e.index));
            let fresh = run_episode(&policy, &env, &stack, e.index, e.seed, false).map_err(|e| e.to_string())?;
            if fresh.summary != *e {
                return Err(format!("{}: episode {} does not replay", dir.display(), e.index).into());
            }
        }
        rates.push(episodes.iter().filter(|e| e.success()).count() as f64 / episodes.len() as f64);
    }
    let m = mean(&rates);
    let per_seed = rates.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ");
    ensure(m >= 0.90, format!("mean success {m:.4} over {} episodes per seed (seeds: {per_seed})", cfg.eval_episodes))
}

fn desk_theorem1() -> Check {
    let (mut events, mut weak) = (0usize, 0.0f64);
    for dir in seed_dirs("SACD_LTM")? {
        let r: Theorem1Report = serde_json::from_str(&read(&dir.join("theorem1.json"))?).map_err(|e| e.to_string())?;
        events += r.events;
        weak += r.non_strict_fraction * r.events as f64;
    }
    let frac = weak / events.max(1) as f64;
    ensure(events > 0 && frac >= 0.95, format!("Q_c(s, safe) <= Q_c(s, raw) on {frac:.4} of {events} replacements"))
}

fn eta_ordering() -> Check {
    let root = results_dir().join("eta_sweep");
    let cfg = desk_config()?;
    let steady_cost = |eta: &str| -> Result<(f64, usize), String> {
        let mut costs = Vec::new();
        for s in [1, 2, 3] {
            let m = metrics(&root.join(format!("eta_{eta}")).join(format!("seed_{s}")))?;
            costs.push(final_average_cost(&m, cfg.train_steps / 2));
        }
        Ok((mean(&costs), costs.len()))
    };
    let ((large, n), (small, _)) = (steady_cost("0.1")?, steady_cost("0.01")?);
    ensure(large > small, format!("second-half average cost over {n} seeds: eta 0.1 {large:.4} vs eta 0.01 {small:.4}"))
}

// ---------------------------------------------------------------- determinism

const TINY: &str = r#"
variant = "SACD_LTM"
seeds = [3]
train_steps = 300
eval_episodes = 4
curve_window = 100

[train]
warmup = 64
n_step = 3

[train.sac]
hidden = [16, 16]
batch_size = 16
"#;

fn determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_onramp");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("tiny.toml");
    std::fs::write(&config, TINY).map_err(|e| e.to_string())?;
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).args(args).arg("--config").arg(&config).output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("onramp {}: {}", args[0], String::from_utf8_lossy(&out.stderr)))
        }
    };
    let mut files = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run_{k}"));
        let d = dir.to_str().unwrap();
        run(&["train", "--out", d, "--log-every", "0"])?;
        let snap = dir.join("seed_3/policy.snap");
        run(&["eval", "--snapshot", snap.to_str().unwrap(), "--out", d, "--traces", "1"])?;
        let read_bytes = |p: &str| std::fs::read(dir.join(p)).map_err(|e| format!("{p}: {e}"));
        files.push([read_bytes("seed_3/metrics.csv")?, read_bytes("eval_episodes.csv")?, read_bytes("traces/episode_0000.csv")?]);
    }
    ensure(files[0] == files[1], format!("metrics, episode table and trace identical across runs: {}", files[0] == files[1]))
}

fn main() -> ExitCode {
    let unit: [(&str, fn() -> Check); 9] = [
        ("fuzzy worked example", fuzzy_worked_example),
        ("fuzzy rule-table corners", fuzzy_rule_corners),
        ("QP oracle equivalence", qp_oracle_equivalence),
        ("linearization", linearization),
        ("gradient suite", gradient_suite),
        ("n-step reduction", n_step_reduction),
        ("shield table and idempotence", shield_table_and_idempotence),
        ("lambda dynamics", lambda_dynamics),
        ("determinism", determinism),
    ];
    let training: [(&str, fn() -> Check); 4] = [
        ("desk (a) cost ordering SACD_LTM < SACD", desk_cost_ordering),
        ("desk (b) SACD_LTM success rate >= 0.90", desk_success_rate),
        ("desk (c) cost critic prefers the shielded action >= 0.95", desk_theorem1),
        ("eta sensitivity ordering", eta_ordering),
    ];
    let strict = std::env::var_os("ONRAMP_ACCEPTANCE_STRICT").is_some();
    panic::set_hook(Box::new(|_| {}));
    let mut fatal = 0;
    let checks = unit.iter().map(|c| (c, true)).chain(training.iter().map(|c| (c, strict)));
    for ((name, check), outcome_is_fatal) in checks {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(Failure::from(format!("panicked: {}", msg.unwrap_or_default())))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(f) => {
                fatal += (!f.missed || outcome_is_fatal) as usize;
                println!("FAIL {name}: {}", f.detail);
            }
        }
    }
    if fatal == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
