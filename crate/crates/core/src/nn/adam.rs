use ndarray::{NdFloat, Zip};
use serde::{Deserialize, Serialize};

use super::{NnError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer state for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ParamSet<F>,
    pub v: ParamSet<F>,
}

impl<F: NdFloat> Adam<F> {
    pub fn new(config: AdamConfig, like: &ParamSet<F>) -> Self {
        Self { config, step: 0, m: like.zeros_like(), v: like.zeros_like() }
    }

    /// One bias-corrected descent step on `params`.
    pub fn update(&mut self, params: &mut ParamSet<F>, grads: &ParamSet<F>) -> Result<(), NnError> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return Err(NnError::ShapeMismatch);
        }
        self.step += 1;
        let c = self.config;
        let f = |x: f64| F::from(x).expect("float conversion");
        let (b1, b2) = (f(c.beta1), f(c.beta2));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        let t = self.step as i32;
        // Bias corrections folded into the step size.
        let lr_t = f(c.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t)));
        let eps_t = f(c.eps * (1.0 - c.beta2.powi(t)).sqrt());

        let layers = params.layers.iter_mut().zip(&grads.layers).zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()));
        for ((p, g), (m, v)) in layers {
            let step = |p: &mut F, &g: &F, m: &mut F, v: &mut F| {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                *p -= lr_t * *m / (v.sqrt() + eps_t);
            };
            Zip::from(&mut p.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(step);
            Zip::from(&mut p.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(step);
        }
        Ok(())
    }
}

/// Adam for a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarAdam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn update(&mut self, param: &mut f64, grad: f64) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad;
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - c.beta1.powi(t));
        let v_hat = self.v / (1.0 - c.beta2.powi(t));
        *param -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Head, MlpSpec};

    fn params() -> ParamSet<f64> {
        let mut p = ParamSet::zeros(&MlpSpec::new(2, &[3], 2, Head::Linear));
        for (i, v) in p.iter_mut().enumerate() {
            *v = i as f64 * 0.1 - 0.7;
        }
        p
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        for (i, v) in g.iter_mut().enumerate() {
            *v = if i % 3 == 0 { 0.0 } else { (i as f64 - 8.0) * 0.37 };
        }
        let mut adam = Adam::new(AdamConfig { lr: 1e-3, ..Default::default() }, &p);
        adam.update(&mut p, &g).unwrap();
        for ((a, b), g) in p.iter().zip(before.iter()).zip(g.iter()) {
            let moved = (a - b).abs();
            if *g == 0.0 {
                assert_eq!(moved, 0.0);
            } else {
                assert!((moved - 1e-3).abs() < 1e-8, "{moved}");
                assert!((a - b) * g < 0.0);
            }
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = params();
        let before = p.clone();
        let g = p.zeros_like();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            adam.update(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn scalar_adam_first_step_is_lr_against_the_gradient() {
        let mut x = 0.5;
        let mut opt = ScalarAdam::new(AdamConfig::default());
        opt.update(&mut x, -3.0);
        assert!((x - 0.5 - 1e-4).abs() < 1e-10);
    }

    #[test]
    fn quadratic_bowl_loss_strictly_decreases() {
        let mut w = params();
        w.iter_mut().enumerate().for_each(|(i, v)| *v = 0.3 + 0.05 * i as f64);
        let mut adam = Adam::new(AdamConfig::default(), &w);
        let loss = |w: &ParamSet<f64>| w.iter().map(|v| v * v).sum::<f64>();
        let mut prev = loss(&w);
        for _ in 0..1000 {
            let mut g = w.clone();
            g.scale(2.0);
            adam.update(&mut w, &g).unwrap();
            let l = loss(&w);
            assert!(l < prev, "{l} !< {prev}");
            prev = l;
        }
    }
}
