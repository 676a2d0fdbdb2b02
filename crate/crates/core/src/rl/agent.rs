use ndarray::{Array1, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::Batch;
use super::losses::{
    cost_critic_loss, critic_loss, elementwise_min, expected_values, lambda_update, policy_loss_lagrangian,
    soft_state_values, temperature_loss,
};
use super::RlError;
use crate::nn::{
    log_softmax_rows, soft_update, softmax_rows, Adam, AdamConfig, CheckpointReader, CheckpointWriter, Head, Mlp,
    MlpSpec, ScalarAdam,
};
use crate::DiscreteAction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Soft target-update rate Γ.
    pub gamma_soft: f64,
    /// Target entropy as a fraction of `log |A|`.
    pub target_entropy_ratio: f64,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub lr_cost: f64,
    pub lr_temperature: f64,
    pub lr_lambda: f64,
    pub lambda0: f64,
    pub init_temperature: f64,
    /// When false λ is frozen at zero.
    pub constrained: bool,
    pub batch_size: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            gamma: 0.99,
            gamma_soft: 0.005,
            target_entropy_ratio: 0.6,
            lr_policy: 1e-4,
            lr_critic: 1e-4,
            lr_cost: 1e-4,
            lr_temperature: 1e-4,
            lr_lambda: 1e-4,
            lambda0: 1.0,
            init_temperature: 0.1,
            constrained: true,
            batch_size: 256,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.gamma_soft > 0.0 && self.gamma_soft <= 1.0) {
            return bad("soft update rate must lie in (0, 1]");
        }
        let lrs = [self.lr_policy, self.lr_critic, self.lr_cost, self.lr_temperature, self.lr_lambda];
        if lrs.iter().any(|lr| !(*lr >= 0.0 && lr.is_finite())) {
            return bad("learning rates must be finite and non-negative");
        }
        if self.lambda0 < 0.0 || self.init_temperature <= 0.0 || self.batch_size == 0 {
            return bad("λ0 must be ≥ 0, the temperature > 0 and the batch non-empty");
        }
        Ok(())
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy_ratio * (DiscreteAction::COUNT as f64).ln()
    }
}

/// Per-gradient-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub qc_loss: f64,
    pub policy_loss: f64,
    pub temperature_loss: f64,
    pub entropy: f64,
    pub mean_qc: f64,
}

/// Parameters and optimizer state of the Lagrangian SAC-Discrete learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub config: SacConfig,
    pub eta: f64,
    pub policy: Mlp<f32>,
    pub q1: Mlp<f32>,
    pub q2: Mlp<f32>,
    pub qc: Mlp<f32>,
    pub q1_target: Mlp<f32>,
    pub q2_target: Mlp<f32>,
    pub qc_target: Mlp<f32>,
    opt_policy: Adam<f32>,
    opt_q1: Adam<f32>,
    opt_q2: Adam<f32>,
    opt_qc: Adam<f32>,
    opt_temperature: ScalarAdam,
    pub log_xi: f64,
    pub lambda: f64,
    pub updates: u64,
}

fn adam(lr: f64) -> AdamConfig {
    AdamConfig { lr, ..AdamConfig::default() }
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, config: SacConfig, eta: f64, rng: &mut R) -> Result<Self, RlError> {
        config.validate()?;
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(RlError::InvalidConfig(format!("cost limit {eta} must be finite and ≥ 0")));
        }
        let n = DiscreteAction::COUNT;
        let policy = Mlp::new(MlpSpec::new(obs_dim, &config.hidden, n, Head::Softmax), rng)?;
        let critic = MlpSpec::new(obs_dim, &config.hidden, n, Head::Linear);
        let q1 = Mlp::new(critic.clone(), rng)?;
        let q2 = Mlp::new(critic.clone(), rng)?;
        let qc = Mlp::new(critic, rng)?;
        Ok(Self {
            opt_policy: Adam::new(adam(config.lr_policy), &policy.params),
            opt_q1: Adam::new(adam(config.lr_critic), &q1.params),
            opt_q2: Adam::new(adam(config.lr_critic), &q2.params),
            opt_qc: Adam::new(adam(config.lr_cost), &qc.params),
            opt_temperature: ScalarAdam::new(adam(config.lr_temperature)),
            log_xi: config.init_temperature.ln(),
            lambda: if config.constrained { config.lambda0 } else { 0.0 },
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            qc_target: qc.clone(),
            policy,
            q1,
            q2,
            qc,
            eta,
            config,
            updates: 0,
        })
    }

    pub fn xi(&self) -> f64 {
        self.log_xi.exp()
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.spec().input_dim
    }

    /// Action probabilities for one observation.
    pub fn probabilities(&self, obs: &[f32]) -> Result<Vec<f32>, RlError> {
        let x = ArrayView1::from(obs).insert_axis(ndarray::Axis(0));
        Ok(self.policy.forward(x)?.row(0).to_vec())
    }

    /// Samples from π(·|s), or takes its argmax when `greedy`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f32], greedy: bool, rng: &mut R) -> Result<DiscreteAction, RlError> {
        let p = self.probabilities(obs)?;
        Ok(DiscreteAction::from_index(if greedy { argmax(&p) } else { sample_index(&p, rng) }).expect("head has |A| outputs"))
    }

    /// Cost-critic q-vector for one observation.
    pub fn cost_values(&self, obs: &[f32]) -> Result<Vec<f32>, RlError> {
        let x = ArrayView1::from(obs).insert_axis(ndarray::Axis(0));
        Ok(self.qc.forward(x)?.row(0).to_vec())
    }

    /// One update in the order λ, reward critics, cost critic, policy,
    /// temperature, then the soft target updates.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateStats, RlError> {
        let xi = self.xi() as f32;

        // Bootstrapped targets from the frozen target networks.
        let z_next = self.policy.logits(batch.s_boot.view())?;
        let (pi_next, log_pi_next) = (softmax_rows(&z_next), log_softmax_rows(&z_next));
        let q_next = elementwise_min(&self.q1_target.forward(batch.s_boot.view())?, &self.q2_target.forward(batch.s_boot.view())?);
        let qc_next = self.qc_target.forward(batch.s_boot.view())?;
        let v_next = soft_state_values(&pi_next, &log_pi_next, &q_next, xi);
        let vc_next = expected_values(&pi_next, &qc_next);
        let y: Array1<f32> = &batch.ret + &(&batch.discount * &v_next);
        let yc: Array1<f32> = &batch.cost + &(&batch.discount * &vc_next);

        let lq1 = critic_loss(&self.q1, batch.s.view(), &batch.a, y.view())?;
        let lq2 = critic_loss(&self.q2, batch.s.view(), &batch.a, y.view())?;
        let lqc = cost_critic_loss(&self.qc, batch.s.view(), &batch.a, yc.view())?;
        let qc_taken: Vec<f64> = lqc.taken.iter().map(|&v| v as f64).collect();
        let mean_qc = qc_taken.iter().sum::<f64>() / qc_taken.len() as f64;
        // The policy sees the critics as evaluated on this batch before their step.
        let q_min = elementwise_min(&lq1.q, &lq2.q);
        let lpi = policy_loss_lagrangian(&self.policy, batch.s.view(), &q_min, &lqc.q, xi, self.lambda as f32)?;
        let (lt, gt) = temperature_loss(&lpi.pi.mapv(f64::from), &lpi.log_pi.mapv(f64::from), self.log_xi, self.config.target_entropy());

        let stats = UpdateStats {
            q1_loss: lq1.loss as f64,
            q2_loss: lq2.loss as f64,
            qc_loss: lqc.loss as f64,
            policy_loss: lpi.loss as f64,
            temperature_loss: lt,
            entropy: lpi.entropy as f64,
            mean_qc,
        };
        let finite = [stats.q1_loss, stats.q2_loss, stats.qc_loss, stats.policy_loss, stats.temperature_loss, mean_qc];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(RlError::NonFinite { update: self.updates, stats: format!("{stats:?}") });
        }

        if self.config.constrained {
            self.lambda = lambda_update(&qc_taken, self.eta, self.lambda, self.config.lr_lambda);
        }
        self.opt_q1.update(&mut self.q1.params, &lq1.grads)?;
        self.opt_q2.update(&mut self.q2.params, &lq2.grads)?;
        self.opt_qc.update(&mut self.qc.params, &lqc.grads)?;
        self.opt_policy.update(&mut self.policy.params, &lpi.grads)?;
        self.opt_temperature.update(&mut self.log_xi, gt);

        let tau = self.config.gamma_soft as f32;
        soft_update(&mut self.q1_target.params, &self.q1.params, tau)?;
        soft_update(&mut self.q2_target.params, &self.q2.params, tau)?;
        soft_update(&mut self.qc_target.params, &self.qc.params, tau)?;
        self.updates += 1;
        Ok(stats)
    }

    pub fn write(&self, w: &mut CheckpointWriter) {
        for net in [&self.policy, &self.q1, &self.q2, &self.qc, &self.q1_target, &self.q2_target, &self.qc_target] {
            w.mlp(net);
        }
        for opt in [&self.opt_policy, &self.opt_q1, &self.opt_q2, &self.opt_qc] {
            w.adam(opt);
        }
        let t = self.opt_temperature;
        for v in [t.config.lr, t.config.beta1, t.config.beta2, t.config.eps] {
            w.f64(v);
        }
        w.u64(t.step);
        w.f64(t.m);
        w.f64(t.v);
        w.f64(self.log_xi);
        w.f64(self.lambda);
        w.f64(self.eta);
        w.u64(self.updates);
    }

    /// Restores an agent written by [`Agent::write`]; `config` supplies the
    /// non-learned settings.
    pub fn read(r: &mut CheckpointReader, config: SacConfig) -> Result<Self, RlError> {
        let mut nets = Vec::with_capacity(7);
        for _ in 0..7 {
            nets.push(r.mlp::<f32>()?);
        }
        let mut it = nets.into_iter();
        let mut next = || it.next().expect("seven networks");
        let (policy, q1, q2, qc, q1_target, q2_target, qc_target) = (next(), next(), next(), next(), next(), next(), next());
        let opt_policy = r.adam(&policy.params)?;
        let opt_q1 = r.adam(&q1.params)?;
        let opt_q2 = r.adam(&q2.params)?;
        let opt_qc = r.adam(&qc.params)?;
        let config_t = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
        let opt_temperature = ScalarAdam { config: config_t, step: r.u64()?, m: r.f64()?, v: r.f64()? };
        Ok(Self {
            config,
            policy,
            q1,
            q2,
            qc,
            q1_target,
            q2_target,
            qc_target,
            opt_policy,
            opt_q1,
            opt_q2,
            opt_qc,
            opt_temperature,
            log_xi: r.f64()?,
            lambda: r.f64()?,
            eta: r.f64()?,
            updates: r.u64()?,
        })
    }
}

pub fn argmax(p: &[f32]) -> usize {
    // First maximum wins so ties resolve deterministically.
    p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
}

/// Inverse-CDF sample from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(p: &[f32], rng: &mut R) -> usize {
    let u: f32 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::{ReplayBuffer, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SacConfig {
        SacConfig { hidden: vec![16, 16], batch_size: 8, lr_lambda: 0.1, ..SacConfig::default() }
    }

    fn filled(n: usize) -> ReplayBuffer {
        let mut b = ReplayBuffer::new(64, 3, 1, 0.99).unwrap();
        for k in 0..n {
            let x = k as f32 * 0.1;
            b.push(Transition { s: vec![x, -x, 1.0], a_safe: k % 5, r: 0.1, c: 1.0, s_next: vec![x + 0.1, -x, 1.0], done: false, truncated: false })
                .unwrap();
        }
        b
    }

    #[test]
    fn update_is_deterministic_and_finite() {
        let buf = filled(32);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut a = Agent::new(3, small(), 0.05, &mut rng).unwrap();
            for _ in 0..20 {
                let batch = buf.sample(8, &mut rng).unwrap();
                a.update(&batch).unwrap();
            }
            a
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.policy.params.is_finite() && a.qc.params.is_finite());
        assert_eq!(a.updates, 20);
    }

    #[test]
    fn constant_cost_above_limit_raises_lambda_and_unconstrained_stays_zero() {
        let buf = filled(32);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut a = Agent::new(3, SacConfig { lr_cost: 1e-2, ..small() }, 0.0, &mut rng).unwrap();
        let mut u = Agent::new(3, SacConfig { constrained: false, ..small() }, 0.0, &mut rng).unwrap();
        let mut prev = a.lambda;
        for _ in 0..200 {
            let batch = buf.sample(8, &mut rng).unwrap();
            let s = a.update(&batch).unwrap();
            u.update(&batch).unwrap();
            if s.mean_qc > 0.0 {
                assert!(a.lambda > prev);
            }
            prev = a.lambda;
        }
        assert!(a.lambda > 1.0);
        assert_eq!(u.lambda, 0.0);
    }

    #[test]
    fn targets_contract_toward_frozen_online_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = Agent::new(3, small(), 0.05, &mut rng).unwrap();
        a.q1_target.params.iter_mut().for_each(|v| *v += 1.0);
        let d0 = a.q1_target.params.distance(&a.q1.params);
        for _ in 0..10 {
            soft_update(&mut a.q1_target.params, &a.q1.params, 0.005).unwrap();
        }
        let d = a.q1_target.params.distance(&a.q1.params);
        assert!((d / d0 - 0.995f32.powi(10)).abs() < 1e-4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let buf = filled(16);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = Agent::new(3, small(), 0.05, &mut rng).unwrap();
        a.update(&buf.sample(8, &mut rng).unwrap()).unwrap();
        let mut w = CheckpointWriter::new(1);
        a.write(&mut w);
        let mut r = CheckpointReader::new(w.finish()).unwrap();
        let b = Agent::read(&mut r, small()).unwrap();
        assert!(r.is_exhausted());
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_and_argmax() {
        let p = [0.0, 0.0, 1.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..50).all(|_| sample_index(&p, &mut rng) == 2));
        assert_eq!(argmax(&[0.2, 0.3, 0.3, 0.1, 0.1]), 1);
    }
}
