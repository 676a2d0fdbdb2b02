//! Dense ReLU networks with hand-written backpropagation.
//!
//! Networks are generic over the float type: training runs in `f32`, the
//! finite-difference gradient checks run the same code in `f64`.

mod adam;
mod checkpoint;

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig, ScalarAdam};
pub use checkpoint::{CheckpointReader, CheckpointWriter, LeFloat, CHECKPOINT_MAGIC};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("input has {got} columns, network expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("gradient has shape {got:?}, expected {expected:?}")]
    GradShape { expected: (usize, usize), got: (usize, usize) },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("parameter sets have different shapes")]
    ShapeMismatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Linear,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, head: Head) -> Self {
        Self { input_dim, hidden: hidden.to_vec(), output_dim, head }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(NnError::InvalidSpec(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }
}

/// Weights are stored `fan_in × fan_out`, so a layer computes `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: NdFloat> Layer<F> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// One set of layer tensors. Used for parameters, gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    pub layers: Vec<Layer<F>>,
}

impl<F: NdFloat> ParamSet<F> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self { layers: spec.layer_dims().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect() }
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.w.nrows(), l.w.ncols())).collect() }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.w.dim() == b.w.dim() && a.b.dim() == b.b.dim())
    }

    /// Flat view: layer by layer, weights (row-major) then biases.
    pub fn iter(&self) -> impl Iterator<Item = &F> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut F> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn get(&self, index: usize) -> F {
        *self.iter().nth(index).expect("parameter index in range")
    }

    pub fn set(&mut self, index: usize, value: F) {
        *self.iter_mut().nth(index).expect("parameter index in range") = value;
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: F) {
        for l in &mut self.layers {
            l.w.mapv_inplace(|v| v * s);
            l.b.mapv_inplace(|v| v * s);
        }
    }

    /// Euclidean distance between two same-shaped sets.
    pub fn distance(&self, other: &Self) -> F {
        self.iter().zip(other.iter()).fold(F::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b)).sqrt()
    }

    pub fn cast<G: NdFloat>(&self) -> ParamSet<G> {
        let conv = |v: &F| G::from(*v).expect("float conversion");
        ParamSet {
            layers: self.layers.iter().map(|l| Layer { w: l.w.map(conv), b: l.b.map(conv) }).collect(),
        }
    }
}

/// `target ← Γ·online + (1 − Γ)·target`, elementwise.
pub fn soft_update<F: NdFloat>(target: &mut ParamSet<F>, online: &ParamSet<F>, gamma_soft: F) -> Result<(), NnError> {
    if !target.same_shape(online) {
        return Err(NnError::ShapeMismatch);
    }
    let keep = F::one() - gamma_soft;
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.w).and(&o.w).for_each(|t, &o| *t = gamma_soft * o + keep * *t);
        Zip::from(&mut t.b).and(&o.b).for_each(|t, &o| *t = gamma_soft * o + keep * *t);
    }
    Ok(())
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    /// Input of every dense layer: the batch, then each hidden activation.
    inputs: Vec<Array2<F>>,
    /// Final pre-head outputs (logits for a softmax head).
    pub logits: Array2<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    spec: MlpSpec,
    pub params: ParamSet<F>,
}

impl<F: NdFloat> Mlp<F> {
    /// Fan-in scaled uniform initialization `U(−1/√fan_in, 1/√fan_in)` for weights and biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, NnError> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || F::from(rng.gen_range(-bound..bound)).expect("float conversion");
                let w = Array2::from_shape_simple_fn((fan_in, fan_out), &mut draw);
                let b = Array1::from_shape_simple_fn(fan_out, &mut draw);
                Layer { w, b }
            })
            .collect();
        Ok(Self { spec, params: ParamSet { layers } })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let params = ParamSet::zeros(&spec);
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: ParamSet<F>) -> Result<Self, NnError> {
        spec.validate()?;
        if !params.same_shape(&ParamSet::zeros(&spec)) {
            return Err(NnError::ShapeMismatch);
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn cast<G: NdFloat>(&self) -> Mlp<G> {
        Mlp { spec: self.spec.clone(), params: self.params.cast() }
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<(), NnError> {
        if x.ncols() != self.spec.input_dim {
            return Err(NnError::InputShape { expected: self.spec.input_dim, got: x.ncols() });
        }
        Ok(())
    }

    /// Pre-head outputs together with the activations needed by [`Mlp::backward`].
    pub fn forward_cached(&self, x: ArrayView2<F>) -> Result<ForwardCache<F>, NnError> {
        self.check_input(&x)?;
        let n = self.params.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut h = x.to_owned();
        for (i, layer) in self.params.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            inputs.push(h);
            if i + 1 < n {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            h = z;
        }
        Ok(ForwardCache { inputs, logits: h })
    }

    /// Pre-head outputs only.
    pub fn logits(&self, x: ArrayView2<F>) -> Result<Array2<F>, NnError> {
        Ok(self.forward_cached(x)?.logits)
    }

    /// Network output with the head applied.
    pub fn forward(&self, x: ArrayView2<F>) -> Result<Array2<F>, NnError> {
        let z = self.logits(x)?;
        Ok(match self.spec.head {
            Head::Linear => z,
            Head::Softmax => softmax_rows(&z),
        })
    }

    /// Parameter gradient of a scalar loss given its gradient with respect to
    /// the pre-head outputs.
    pub fn backward(&self, cache: &ForwardCache<F>, grad_logits: &Array2<F>) -> Result<ParamSet<F>, NnError> {
        if grad_logits.dim() != cache.logits.dim() {
            return Err(NnError::GradShape { expected: cache.logits.dim(), got: grad_logits.dim() });
        }
        let n = self.params.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut g = grad_logits.clone();
        for i in (0..n).rev() {
            let input = &cache.inputs[i];
            let dw = input.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            if i > 0 {
                let mut gin = g.dot(&self.params.layers[i].w.t());
                Zip::from(&mut gin).and(input).for_each(|d, &a| {
                    if a <= F::zero() {
                        *d = F::zero();
                    }
                });
                g = gin;
            }
            grads.push(Layer { w: dw, b: db });
        }
        grads.reverse();
        Ok(ParamSet { layers: grads })
    }

    /// Like [`Mlp::backward`], but `grad_output` is taken with respect to the
    /// head output (the probabilities for a softmax head).
    pub fn backward_output(&self, cache: &ForwardCache<F>, grad_output: &Array2<F>) -> Result<ParamSet<F>, NnError> {
        match self.spec.head {
            Head::Linear => self.backward(cache, grad_output),
            Head::Softmax => {
                let pi = softmax_rows(&cache.logits);
                self.backward(cache, &softmax_backward(&pi, grad_output))
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: NdFloat>(z: &Array2<F>) -> Array2<F> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Row-wise `log softmax`, exact even where the probabilities underflow.
pub fn log_softmax_rows<F: NdFloat>(z: &Array2<F>) -> Array2<F> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        let lse = row.fold(F::zero(), |a, &v| a + (v - m).exp()).ln() + m;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Gradient with respect to the logits from the gradient with respect to
/// the probabilities: `π ⊙ (g − ⟨π, g⟩)` per row.
pub fn softmax_backward<F: NdFloat>(pi: &Array2<F>, grad_pi: &Array2<F>) -> Array2<F> {
    let mut out = grad_pi.clone();
    for (mut o, p) in out.rows_mut().into_iter().zip(pi.rows()) {
        let dot = o.iter().zip(p.iter()).fold(F::zero(), |acc, (g, p)| acc + *g * *p);
        Zip::from(&mut o).and(&p).for_each(|g, &p| *g = p * (*g - dot));
    }
    out
}
