//! SAC-Discrete losses with their analytic gradients.
//!
//! Every function is generic over the float type so that the same code is
//! exercised by the `f64` finite-difference checks and the `f32` trainer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, NdFloat, Zip};

use crate::nn::{log_softmax_rows, softmax_rows, Mlp, NnError, ParamSet};

/// `πᵀ(q − ξ log π)` for one state.
pub fn soft_state_value<F: NdFloat>(pi: &[F], q: &[F], xi: F) -> F {
    pi.iter().zip(q).fold(F::zero(), |acc, (&p, &q)| {
        let ent = if p > F::zero() { xi * p.ln() } else { F::zero() };
        acc + p * (q - ent)
    })
}

/// Row-wise soft state values from probabilities and log-probabilities.
pub fn soft_state_values<F: NdFloat>(pi: &Array2<F>, log_pi: &Array2<F>, q: &Array2<F>, xi: F) -> Array1<F> {
    let mut out = Array1::zeros(pi.nrows());
    Zip::from(&mut out).and(pi.rows()).and(log_pi.rows()).and(q.rows()).for_each(|v, p, lp, q| {
        *v = p.iter().zip(lp).zip(q).fold(F::zero(), |acc, ((&p, &lp), &q)| acc + p * (q - xi * lp));
    });
    out
}

/// Row-wise `πᵀ q`.
pub fn expected_values<F: NdFloat>(pi: &Array2<F>, q: &Array2<F>) -> Array1<F> {
    (pi * q).sum_axis(ndarray::Axis(1))
}

/// Elementwise minimum of two q-vector batches.
pub fn elementwise_min<F: NdFloat>(a: &Array2<F>, b: &Array2<F>) -> Array2<F> {
    let mut out = a.clone();
    Zip::from(&mut out).and(b).for_each(|x, &y| *x = x.min(y));
    out
}

/// One-step target `r + γ (1 − done) V`.
pub fn one_step_target<F: NdFloat>(r: F, gamma: F, done: bool, v: F) -> F {
    let d = if done { F::one() } else { F::zero() };
    r + gamma * (F::one() - d) * v
}

/// n-step reward and cost targets for the window starting at `t`.
///
/// `window` holds `(r, c)` for `t, t+1, …`; only its first `n` entries are
/// used. When `terminated` is set the window ends in a terminal transition and
/// the bootstrap values are dropped.
pub fn n_step_targets<F: NdFloat>(window: &[(F, F)], terminated: bool, v_bar: F, v_bar_c: F, gamma: F, n: usize) -> (F, F) {
    let k = window.len().min(n);
    let mut ret = F::zero();
    let mut cost = F::zero();
    let mut g = F::one();
    for &(r, c) in &window[..k] {
        ret += g * r;
        cost += g * c;
        g *= gamma;
    }
    let g = if terminated { F::zero() } else { g };
    (ret + g * v_bar, cost + g * v_bar_c)
}

/// Loss value with its parameter gradient.
#[derive(Debug, Clone)]
pub struct LossGrad<F> {
    pub loss: F,
    pub grads: ParamSet<F>,
    /// Network output at the taken actions.
    pub taken: Array1<F>,
    /// Full network output for the batch.
    pub q: Array2<F>,
}

/// `mean ½ (Q(s, a) − target)²` over the batch. Used for both reward critics
/// and the cost critic.
pub fn critic_loss<F: NdFloat>(
    net: &Mlp<F>,
    s: ArrayView2<F>,
    actions: &[usize],
    targets: ArrayView1<F>,
) -> Result<LossGrad<F>, NnError> {
    let b = s.nrows();
    if actions.len() != b || targets.len() != b {
        return Err(NnError::GradShape { expected: (b, 1), got: (actions.len(), targets.len()) });
    }
    let cache = net.forward_cached(s)?;
    let q = cache.logits.clone();
    let nb = F::from(b).expect("batch size");
    let mut grad = Array2::zeros(q.dim());
    let mut taken = Array1::zeros(b);
    let mut loss = F::zero();
    for (i, &a) in actions.iter().enumerate() {
        let diff = q[[i, a]] - targets[i];
        taken[i] = q[[i, a]];
        loss += F::from(0.5).expect("half") * diff * diff;
        grad[[i, a]] = diff / nb;
    }
    let grads = net.backward(&cache, &grad)?;
    Ok(LossGrad { loss: loss / nb, grads, taken, q })
}

/// Cost-critic loss: the same squared error against the cost targets.
pub fn cost_critic_loss<F: NdFloat>(
    net: &Mlp<F>,
    s: ArrayView2<F>,
    actions: &[usize],
    targets_c: ArrayView1<F>,
) -> Result<LossGrad<F>, NnError> {
    critic_loss(net, s, actions, targets_c)
}

#[derive(Debug, Clone)]
pub struct PolicyLoss<F> {
    pub loss: F,
    pub grads: ParamSet<F>,
    pub pi: Array2<F>,
    pub log_pi: Array2<F>,
    /// Mean policy entropy over the batch.
    pub entropy: F,
}

/// `mean πᵀ(ξ log π − q_min + λ q_c)` with critics held fixed.
pub fn policy_loss_lagrangian<F: NdFloat>(
    policy: &Mlp<F>,
    s: ArrayView2<F>,
    q_min: &Array2<F>,
    q_c: &Array2<F>,
    xi: F,
    lambda: F,
) -> Result<PolicyLoss<F>, NnError> {
    let cache = policy.forward_cached(s)?;
    if q_min.dim() != cache.logits.dim() || q_c.dim() != cache.logits.dim() {
        return Err(NnError::GradShape { expected: cache.logits.dim(), got: q_min.dim() });
    }
    let pi = softmax_rows(&cache.logits);
    let log_pi = log_softmax_rows(&cache.logits);
    let nb = F::from(s.nrows()).expect("batch size");

    let mut loss = F::zero();
    let mut entropy = F::zero();
    let mut grad_pi = Array2::zeros(pi.dim());
    Zip::from(grad_pi.rows_mut()).and(pi.rows()).and(log_pi.rows()).and(q_min.rows()).and(q_c.rows()).for_each(
        |mut g, p, lp, q, qc| {
            for a in 0..p.len() {
                let term = xi * lp[a] - q[a] + lambda * qc[a];
                loss += p[a] * term;
                entropy -= p[a] * lp[a];
                g[a] = (xi * (lp[a] + F::one()) - q[a] + lambda * qc[a]) / nb;
            }
        },
    );
    let grad_logits = crate::nn::softmax_backward(&pi, &grad_pi);
    let grads = policy.backward(&cache, &grad_logits)?;
    Ok(PolicyLoss { loss: loss / nb, grads, pi, log_pi, entropy: entropy / nb })
}

/// `G(ξ) = mean πᵀ[−ξ(log π + H̄)]` with `ξ = exp(log_xi)` and π detached.
/// Returns the loss and its derivative with respect to `log_xi`.
pub fn temperature_loss<F: NdFloat>(pi: &Array2<F>, log_pi: &Array2<F>, log_xi: F, target_entropy: F) -> (F, F) {
    let xi = log_xi.exp();
    let nb = F::from(pi.nrows()).expect("batch size");
    let mut sum = F::zero();
    Zip::from(pi).and(log_pi).for_each(|&p, &lp| sum += p * (-(lp + target_entropy)));
    let per_xi = sum / nb;
    // G is linear in ξ, so dG/d log ξ = ξ · dG/dξ = G.
    (xi * per_xi, xi * per_xi)
}

/// `J(λ) = mean −λ (Q_c(s, a) − η)` and its derivative in λ.
pub fn lambda_loss<F: NdFloat>(q_c_taken: &[F], eta: F, lambda: F) -> (F, F) {
    let n = F::from(q_c_taken.len().max(1)).expect("count");
    let mean = q_c_taken.iter().fold(F::zero(), |a, &q| a + q) / n;
    let grad = -(mean - eta);
    (lambda * grad, grad)
}

/// Projected dual step `λ' = max(0, λ + α_λ (mean Q_c − η))`.
pub fn lambda_update<F: NdFloat>(q_c_taken: &[F], eta: F, lambda: F, lr_lambda: F) -> F {
    let (_, grad) = lambda_loss(q_c_taken, eta, lambda);
    (lambda - lr_lambda * grad).max(F::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Head, MlpSpec};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_value_of_uniform_policy_is_log_five() {
        let pi = [0.2; 5];
        assert!((soft_state_value(&pi, &[0.0; 5], 1.0) - 5f64.ln()).abs() < 1e-12);
        let q = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((soft_state_value(&pi, &q, 0.0) - 3.0).abs() < 1e-12);
        let sharp = [1.0 - 4e-12, 1e-12, 1e-12, 1e-12, 1e-12];
        assert!((soft_state_value(&sharp, &q, 1.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn batched_soft_values_match_scalar_form() {
        let z: Array2<f64> = array![[0.3, -1.0, 2.0, 0.0, 0.5], [1.0, 1.0, 1.0, 1.0, -4.0]];
        let pi = softmax_rows(&z);
        let lp = log_softmax_rows(&z);
        let q = array![[1.0, 2.0, 0.0, -1.0, 3.0], [0.5, 0.5, 0.5, 0.5, 9.0]];
        let v = soft_state_values(&pi, &lp, &q, 0.7);
        for i in 0..2 {
            let scalar = soft_state_value(pi.row(i).as_slice().unwrap(), q.row(i).as_slice().unwrap(), 0.7);
            assert!((v[i] - scalar).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_loss_small_cases() {
        let spec = MlpSpec::new(1, &[2], 5, Head::Linear);
        let mut net = Mlp::<f64>::zeros(spec).unwrap();
        net.params.layers[1].b[2] = 2.0;
        let s = array![[0.0]];
        let l = critic_loss(&net, s.view(), &[2], array![0.0].view()).unwrap();
        assert_eq!(l.loss, 2.0);
        let l = critic_loss(&net, s.view(), &[2], array![2.0].view()).unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(l.grads.iter().all(|g| *g == 0.0));
        let l = cost_critic_loss(&Mlp::<f64>::zeros(MlpSpec::new(1, &[2], 5, Head::Linear)).unwrap(), s.view(), &[0], array![0.0].view()).unwrap();
        assert_eq!(l.loss, 0.0);
    }

    #[test]
    fn entropy_only_policy_loss_is_negative_entropy() {
        let spec = MlpSpec::new(3, &[4], 5, Head::Softmax);
        let policy = Mlp::<f64>::new(spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = array![[0.1, 0.2, -0.3], [1.0, -1.0, 0.5]];
        let zero = Array2::zeros((2, 5));
        let l = policy_loss_lagrangian(&policy, s.view(), &zero, &zero, 1.0, 3.0).unwrap();
        assert!((l.loss + l.entropy).abs() < 1e-12);
        let uniform = policy_loss_lagrangian(&Mlp::zeros(policy.spec().clone()).unwrap(), s.view(), &zero, &zero, 1.0, 0.0).unwrap();
        assert!(uniform.loss <= l.loss);
        assert!((uniform.loss + 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn temperature_moves_toward_target_entropy() {
        let uniform = Array2::from_elem((1, 5), 0.2);
        let lp = uniform.mapv(f64::ln);
        let (_, g) = temperature_loss(&uniform, &lp, 0.0, 0.6 * 5f64.ln());
        assert!(g > 0.0, "entropy above target must lower the temperature");
        let (_, g) = temperature_loss(&uniform, &lp, 0.0, 5f64.ln());
        assert!(g.abs() < 1e-12);
        let peaked = array![[0.96, 0.01, 0.01, 0.01, 0.01]];
        let (_, g) = temperature_loss(&peaked, &peaked.mapv(f64::ln), 0.0, 0.6 * 5f64.ln());
        assert!(g < 0.0);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_update(&[0.3, 0.1], 0.2, 1.5, 1e-4), 1.5);
        assert!((lambda_update(&[1.05f64], 0.05, 1.0, 1e-4) - 1.0001).abs() < 1e-12);
        assert_eq!(lambda_update(&[0.0], 1.0, 0.0, 1e-4), 0.0);
    }
}
