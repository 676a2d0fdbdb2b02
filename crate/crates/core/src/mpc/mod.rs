//! Linearized kinematic-bicycle MPC.
//!
//! The controller tracks a straight centerline reference over a short horizon.
//! Errors from the reference evolve linearly, so the whole horizon condenses to
//! a box-constrained QP over the control errors. The same plan serves as a
//! motion prediction (`predict`) and as the low-level controller (`execute`).

mod bicycle;
mod controller;
mod qp;
mod reference;

pub use bicycle::{
    bicycle_rhs, discretize, integrate_bicycle, integrate_state, linearize, wrap_angle, BicycleParams,
    ControlInput,
};
pub use controller::{
    constant_velocity_prediction, MpcConfig, MpcController, MpcPlan, PredictedPoint, PredictedStates,
    PredictionBackend,
};
pub use qp::{solve_qp, solve_qp_with, QpProblem, QpSettings, QpSolution};
pub use reference::{build_reference, reference_for_target, reference_speed, DecisionTarget, RefPoint, ReferenceTrajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MpcError {
    #[error("infeasible bounds at index {index}: lo {lo} > hi {hi}")]
    InfeasibleBounds { index: usize, lo: f64, hi: f64 },
    #[error("hessian is not positive semidefinite (smallest eigenvalue {0})")]
    NotPositiveSemidefinite(f64),
    #[error("hessian is not symmetric (max asymmetry {0})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite problem data")]
    NonFinite,
    #[error("QP did not converge after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("prediction index {sigma} outside 1..={horizon}")]
    InvalidSigma { sigma: usize, horizon: usize },
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
}
