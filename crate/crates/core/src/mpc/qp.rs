//! Dense box-constrained convex QP: `min ½xᵀHx + gᵀx` s.t. `lo ≤ x ≤ hi`.
//!
//! Solved by projected Newton iterations on the free variables with a
//! projected Armijo search, falling back to a projected gradient step when the
//! search stalls. Singular free blocks take a pseudo-inverse step plus a
//! descent move along any zero-curvature direction the gradient has.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::MpcError;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Euclidean norm of `x - clamp(x - ∇f(x))`.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { tolerance: 1e-11, max_iterations: 500 }
    }
}

/// Largest residual accepted from a solve that ran out of iterations.
const ACCEPTED_RESIDUAL: f64 = 1e-8;

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    pub fn project(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn kkt_residual(&self, x: &DVector<f64>) -> f64 {
        let grad = &self.hessian * x + &self.gradient;
        residual(self, x, &grad)
    }

    /// Checks shapes, finiteness, bound ordering and positive semidefiniteness.
    /// Returns the largest eigenvalue of the Hessian.
    pub fn validate(&self) -> Result<f64, MpcError> {
        let n = self.dim();
        if self.hessian.shape() != (n, n) || self.lower.len() != n || self.upper.len() != n {
            return Err(MpcError::DimensionMismatch(format!(
                "hessian {:?}, gradient {}, bounds {}/{}",
                self.hessian.shape(),
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.hessian.iter().chain(self.gradient.iter()).any(|v| !v.is_finite()) {
            return Err(MpcError::NonFinite);
        }
        for i in 0..n {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(MpcError::InfeasibleBounds { index: i, lo, hi });
            }
        }
        if n == 0 {
            return Ok(0.0);
        }
        let scale = self.hessian.amax().max(1.0);
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(MpcError::NotSymmetric(asym));
        }
        let eig = SymmetricEigen::new(symmetrize(&self.hessian)).eigenvalues;
        let min = eig.min();
        if min < -1e-9 * scale {
            return Err(MpcError::NotPositiveSemidefinite(min));
        }
        Ok(eig.max().max(0.0))
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn residual(p: &QpProblem, x: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let r = x[i] - (x[i] - grad[i]).clamp(p.lower[i], p.upper[i]);
        s += r * r;
    }
    s.sqrt()
}

pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, MpcError> {
    solve_qp_with(problem, &QpSettings::default(), None)
}

/// Solves `problem`, optionally warm-started from `start` (projected onto the box).
pub fn solve_qp_with(
    problem: &QpProblem,
    settings: &QpSettings,
    start: Option<&DVector<f64>>,
) -> Result<QpSolution, MpcError> {
    let lmax = problem.validate()?;
    let n = problem.dim();
    let h = symmetrize(&problem.hessian);
    let p = QpProblem { hessian: h, ..problem.clone() };
    let mut x = start.cloned().unwrap_or_else(|| DVector::zeros(n));
    if x.len() != n {
        return Err(MpcError::DimensionMismatch(format!("warm start has {} entries, expected {n}", x.len())));
    }
    p.project(&mut x);
    let pg_step = if lmax > 0.0 { 1.0 / lmax } else { 1.0 };
    let diameter = (0..n)
        .map(|i| (p.upper[i] - p.lower[i]).min(1e6))
        .fold(0.0_f64, f64::max)
        .max(1.0);

    let mut f = p.objective(&x);
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let grad = &p.hessian * &x + &p.gradient;
        let r = residual(&p, &x, &grad);
        if r <= settings.tolerance {
            break;
        }
        iterations += 1;

        let eps = r.min(1e-3);
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let at_lo = x[i] - p.lower[i] <= eps && grad[i] > 0.0;
                let at_hi = p.upper[i] - x[i] <= eps && grad[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();

        let mut d = DVector::zeros(n);
        for i in 0..n {
            let scale = if p.hessian[(i, i)] > 0.0 { p.hessian[(i, i)] } else { 1.0 };
            d[i] = -grad[i] / scale;
        }
        if !free.is_empty() {
            let d_free = newton_direction(&p.hessian, &grad, &free, diameter);
            for (k, &i) in free.iter().enumerate() {
                d[i] = d_free[k];
            }
        }

        match armijo(&p, &x, &grad, &d, f) {
            Some((x_new, f_new)) => {
                x = x_new;
                f = f_new;
            }
            None => {
                let mut x_new = &x - &grad * pg_step;
                p.project(&mut x_new);
                let f_new = p.objective(&x_new);
                if f_new > f {
                    // Only rounding noise is left.
                    break;
                }
                x = x_new;
                f = f_new;
            }
        }
    }
    let grad = &p.hessian * &x + &p.gradient;
    let kkt = residual(&p, &x, &grad);
    if kkt > settings.tolerance.max(ACCEPTED_RESIDUAL) {
        return Err(MpcError::NotConverged { iterations, residual: kkt });
    }
    Ok(QpSolution { objective: p.objective(&x), x, iterations, kkt_residual: kkt })
}

fn newton_direction(h: &DMatrix<f64>, grad: &DVector<f64>, free: &[usize], diameter: f64) -> DVector<f64> {
    let m = free.len();
    let hff = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let gf = DVector::from_fn(m, |a, _| grad[free[a]]);
    if let Some(chol) = hff.clone().cholesky() {
        let d = chol.solve(&(-&gf));
        if d.iter().all(|v| v.is_finite()) {
            return d;
        }
    }
    let eig = SymmetricEigen::new(hff);
    let top = eig.eigenvalues.amax();
    let cutoff = 1e-10 * top.max(1e-300);
    let mut d = DVector::zeros(m);
    let mut null = DVector::zeros(m);
    for j in 0..m {
        let v = eig.eigenvectors.column(j);
        let coef = v.dot(&gf);
        if eig.eigenvalues[j] > cutoff {
            d -= v * (coef / eig.eigenvalues[j]);
        } else {
            null -= v * coef;
        }
    }
    let nn = null.norm();
    if nn > 1e-12 * (1.0 + gf.norm()) {
        d += null * (diameter / nn);
    }
    d
}

fn armijo(
    p: &QpProblem,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    d: &DVector<f64>,
    f: f64,
) -> Option<(DVector<f64>, f64)> {
    let mut t = 1.0;
    for _ in 0..60 {
        let mut xt = x + d * t;
        p.project(&mut xt);
        let step = &xt - x;
        let slope = grad.dot(&step);
        if slope < 0.0 {
            let ft = p.objective(&xt);
            if ft <= f + 1e-4 * slope {
                return Some((xt, ft));
            }
        }
        t *= 0.5;
    }
    None
}
