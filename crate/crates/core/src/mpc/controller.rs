use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, Vector4};
use serde::{Deserialize, Serialize};

use super::bicycle::{discretize, linearize, wrap_angle, BicycleParams, ControlInput};
use super::qp::{solve_qp_with, QpProblem, QpSettings};
use super::reference::{reference_for_target, DecisionTarget, ReferenceTrajectory};
use super::MpcError;
use crate::sim::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal state weights on `[x, y, v, φ]` errors.
    pub q: [f64; 4],
    /// Diagonal control weights on `[a, δ]`.
    pub p: [f64; 2],
    pub delta_v: f64,
    pub bicycle: BicycleParams,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.1,
            q: [1.0, 0.1, 0.5, 12.0],
            p: [1.0, 50.0],
            delta_v: 2.0,
            bicycle: BicycleParams::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err(MpcError::InvalidConfig("horizon and dt must be positive".into()));
        }
        if self.q.iter().chain(&self.p).any(|w| !(*w >= 0.0)) || self.p.iter().any(|w| *w <= 0.0) {
            return Err(MpcError::InvalidConfig("weights must be nonnegative, control weights positive".into()));
        }
        if !self.bicycle.is_valid() {
            return Err(MpcError::InvalidConfig("invalid bicycle parameters".into()));
        }
        if !(self.delta_v >= 0.0) {
            return Err(MpcError::InvalidConfig("delta_v must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictedPoint {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub phi: f64,
}

/// Predicted ego states over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedStates {
    /// Stages `1..=N`.
    pub points: Vec<PredictedPoint>,
    pub sigma: usize,
    pub dt: f64,
}

impl PredictedStates {
    pub fn at_sigma(&self) -> PredictedPoint {
        self.points[self.sigma - 1]
    }

    pub fn horizon_end(&self) -> PredictedPoint {
        *self.points.last().expect("non-empty horizon")
    }

    pub fn horizon(&self) -> usize {
        self.points.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionBackend {
    #[default]
    Mpc,
    /// Straight-line extrapolation at the current speed and heading.
    ConstantVelocity,
}

/// Solution of one receding-horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub reference: ReferenceTrajectory,
    pub controls: Vec<ControlInput>,
    /// Predicted state errors at stages `1..=N`.
    pub errors: Vec<[f64; 4]>,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
}

impl MpcPlan {
    pub fn predicted(&self, sigma: usize) -> PredictedStates {
        let points = self
            .reference
            .points
            .iter()
            .zip(&self.errors)
            .map(|(r, e)| PredictedPoint { x: r.x + e[0], y: r.y + e[1], v: r.v + e[2], phi: r.phi + e[3] })
            .collect();
        PredictedStates { points, sigma, dt: self.reference.dt }
    }
}

/// Condensed error dynamics `E_X = Φ e0 + Γ E_U` over the horizon.
struct Condensed {
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

fn condense(stages: &[(Matrix4<f64>, Matrix4x2<f64>)]) -> Condensed {
    let n = stages.len();
    let mut phi = DMatrix::zeros(4 * n, 4);
    let mut gamma = DMatrix::zeros(4 * n, 2 * n);
    let mut acc = Matrix4::identity();
    for (k, (ak, bk)) in stages.iter().enumerate() {
        acc = ak * acc;
        phi.view_mut((4 * k, 0), (4, 4)).copy_from(&acc);
        if k > 0 {
            for j in 0..k {
                let prev: Matrix4x2<f64> = gamma.fixed_view::<4, 2>(4 * (k - 1), 2 * j).into();
                gamma.view_mut((4 * k, 2 * j), (4, 2)).copy_from(&(ak * prev));
            }
        }
        gamma.view_mut((4 * k, 2 * k), (4, 2)).copy_from(bk);
    }
    Condensed { phi, gamma }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcController {
    config: MpcConfig,
    qp: QpSettings,
}

impl MpcController {
    pub fn new(config: MpcConfig) -> Result<Self, MpcError> {
        config.validate()?;
        Ok(Self { config, qp: QpSettings::default() })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Error-dynamics QP for tracking `reference` from `ego`, plus the initial error.
    pub fn build_problem(&self, ego: &VehicleState, reference: &ReferenceTrajectory) -> (QpProblem, Vector4<f64>) {
        let c = &self.config;
        let n = reference.horizon();
        let stages: Vec<_> = (0..n)
            .map(|k| {
                let r = reference.stage(k);
                let (a, b) = linearize(r.v, r.phi, r.delta, &c.bicycle);
                discretize(&a, &b, reference.dt)
            })
            .collect();
        let Condensed { phi, gamma } = condense(&stages);
        let o = &reference.origin;
        let e0 = Vector4::new(ego.x - o.x, ego.y - o.y, ego.v - o.v, wrap_angle(ego.phi - o.phi));

        let qbar = DVector::from_fn(4 * n, |i, _| c.q[i % 4]);
        let qg = DMatrix::from_fn(4 * n, 2 * n, |i, j| qbar[i] * gamma[(i, j)]);
        let mut hessian = gamma.transpose() * &qg * 2.0;
        for i in 0..2 * n {
            hessian[(i, i)] += 2.0 * c.p[i % 2];
        }
        let gradient = qg.transpose() * (&phi * e0) * 2.0;

        let b = &c.bicycle;
        let mut lower = DVector::zeros(2 * n);
        let mut upper = DVector::zeros(2 * n);
        for k in 0..n {
            let r = reference.stage(k);
            lower[2 * k] = -b.a_max_ctrl;
            upper[2 * k] = b.a_max_ctrl;
            lower[2 * k + 1] = -b.delta_max - r.delta;
            upper[2 * k + 1] = b.delta_max - r.delta;
        }
        (QpProblem { hessian, gradient, lower, upper }, e0)
    }

    pub fn plan(&self, ego: &VehicleState, target: &DecisionTarget) -> Result<MpcPlan, MpcError> {
        let c = &self.config;
        let reference = reference_for_target(ego, target, c.horizon, c.dt);
        let (problem, e0) = self.build_problem(ego, &reference);
        let sol = solve_qp_with(&problem, &self.qp, None)?;

        let n = c.horizon;
        let controls = (0..n)
            .map(|k| {
                let r = reference.stage(k);
                ControlInput { accel: sol.x[2 * k], steer: sol.x[2 * k + 1] + r.delta }
            })
            .collect();
        let stages: Vec<_> = (0..n)
            .map(|k| {
                let r = reference.stage(k);
                let (a, b) = linearize(r.v, r.phi, r.delta, &c.bicycle);
                discretize(&a, &b, reference.dt)
            })
            .collect();
        let mut e = e0;
        let errors = stages
            .iter()
            .enumerate()
            .map(|(k, (ak, bk))| {
                let u = nalgebra::Vector2::new(sol.x[2 * k], sol.x[2 * k + 1]);
                e = ak * e + bk * u;
                [e[0], e[1], e[2], e[3]]
            })
            .collect();
        Ok(MpcPlan { reference, controls, errors, qp_iterations: sol.iterations, kkt_residual: sol.kkt_residual })
    }

    /// Predicted ego trajectory under `target`, reporting stage `sigma`.
    pub fn predict(&self, ego: &VehicleState, target: &DecisionTarget, sigma: usize) -> Result<PredictedStates, MpcError> {
        self.check_sigma(sigma)?;
        Ok(self.plan(ego, target)?.predicted(sigma))
    }

    /// First control of the optimal sequence.
    pub fn execute(&self, ego: &VehicleState, target: &DecisionTarget) -> Result<ControlInput, MpcError> {
        Ok(self.plan(ego, target)?.controls[0].clamped(&self.config.bicycle))
    }

    pub fn predict_with(
        &self,
        backend: PredictionBackend,
        ego: &VehicleState,
        target: &DecisionTarget,
        sigma: usize,
    ) -> Result<PredictedStates, MpcError> {
        match backend {
            PredictionBackend::Mpc => self.predict(ego, target, sigma),
            PredictionBackend::ConstantVelocity => {
                self.check_sigma(sigma)?;
                Ok(constant_velocity_prediction(ego, self.config.horizon, self.config.dt, sigma))
            }
        }
    }

    fn check_sigma(&self, sigma: usize) -> Result<(), MpcError> {
        if sigma == 0 || sigma > self.config.horizon {
            return Err(MpcError::InvalidSigma { sigma, horizon: self.config.horizon });
        }
        Ok(())
    }
}

pub fn constant_velocity_prediction(ego: &VehicleState, horizon: usize, dt: f64, sigma: usize) -> PredictedStates {
    let points = (1..=horizon)
        .map(|k| {
            let t = k as f64 * dt;
            PredictedPoint { x: ego.x + ego.vx() * t, y: ego.y + ego.vy() * t, v: ego.v, phi: ego.phi }
        })
        .collect();
    PredictedStates { points, sigma, dt }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::DiscreteAction;
    use crate::mpc::bicycle::integrate_bicycle;
    use crate::sim::{Lane, RoadGeometry};

    fn controller() -> MpcController {
        MpcController::new(MpcConfig::default()).unwrap()
    }

    fn hold(ego: &VehicleState) -> DecisionTarget {
        DecisionTarget { lane: ego.lane, y: ego.y, v_r: ego.v }
    }

    #[test]
    fn condensed_dynamics_match_stepwise_rollout() {
        let p = BicycleParams::default();
        let stages: Vec<_> = [(20.0, 0.1, 0.05), (21.0, 0.0, -0.1), (19.0, -0.2, 0.0)]
            .iter()
            .map(|&(v, phi, d)| {
                let (a, b) = linearize(v, phi, d, &p);
                discretize(&a, &b, 0.1)
            })
            .collect();
        let Condensed { phi, gamma } = condense(&stages);
        let e0 = Vector4::new(0.3, -0.2, 1.0, 0.05);
        let u = DVector::from_vec(vec![0.5, 0.02, -1.0, 0.0, 0.3, -0.04]);
        let stacked = &phi * e0 + &gamma * &u;
        let mut e = e0;
        for (k, (ak, bk)) in stages.iter().enumerate() {
            e = ak * e + bk * nalgebra::Vector2::new(u[2 * k], u[2 * k + 1]);
            for i in 0..4 {
                assert!((stacked[4 * k + i] - e[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn on_reference_means_no_control() {
        let ego = VehicleState::new(10.0, 0.0, 20.0, 0.0, Lane::Main);
        let u = controller().execute(&ego, &hold(&ego)).unwrap();
        assert!(u.accel.abs() < 1e-6 && u.steer.abs() < 1e-6);
        let pred = controller().predict(&ego, &hold(&ego), 5).unwrap();
        let p = pred.at_sigma();
        assert!((p.x - (10.0 + 5.0 * 20.0 * 0.1)).abs() < 1e-9 && p.y.abs() < 1e-9);
        assert_eq!(controller().predict(&ego, &hold(&ego), 10).unwrap().at_sigma(), pred.horizon_end());
    }

    #[test]
    fn steers_back_toward_the_centerline() {
        let ego = VehicleState::new(10.0, -1.0, 20.0, 0.0, Lane::Main);
        let target = DecisionTarget { lane: Lane::Main, y: 0.0, v_r: 20.0 };
        let u = controller().execute(&ego, &target).unwrap();
        assert!(u.steer > 0.0);
    }

    #[test]
    fn faster_accelerates() {
        let g = RoadGeometry::default();
        let ego = VehicleState::new(10.0, 0.0, 18.0, 0.0, Lane::Main);
        let target = DecisionTarget::new(&ego, DiscreteAction::Faster, &g, 2.0);
        let u = controller().execute(&ego, &target).unwrap();
        assert!(u.accel > 0.0);
    }

    #[test]
    fn sigma_out_of_range_is_rejected() {
        let ego = VehicleState::new(10.0, 0.0, 20.0, 0.0, Lane::Main);
        assert!(controller().predict(&ego, &hold(&ego), 0).is_err());
        assert!(controller().predict(&ego, &hold(&ego), 11).is_err());
    }

    #[test]
    fn first_stage_matches_one_tick_of_execution() {
        let g = RoadGeometry::default();
        let mpc = controller();
        let p = BicycleParams::default();
        let starts = [
            (VehicleState::new(100.0, -5.0, 20.0, 0.0, Lane::Ramp), DiscreteAction::Left),
            (VehicleState::new(100.0, -3.0, 24.0, 0.05, Lane::Main), DiscreteAction::Idle),
            (VehicleState::new(40.0, -5.0, 18.0, 0.0, Lane::Ramp), DiscreteAction::Faster),
            (VehicleState::new(170.0, 0.4, 25.0, -0.02, Lane::Main), DiscreteAction::Slower),
        ];
        for (ego, action) in starts {
            let target = DecisionTarget::new(&ego, action, &g, 2.0);
            let first = mpc.predict(&ego, &target, 1).unwrap().at_sigma();
            let next = integrate_bicycle(&ego, mpc.execute(&ego, &target).unwrap(), &p, 0.1);
            assert!((first.x - next.x).hypot(first.y - next.y) < 1e-2, "{action}: {first:?} vs {next:?}");
        }
    }
}
