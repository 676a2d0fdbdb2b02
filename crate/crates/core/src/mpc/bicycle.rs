use std::f64::consts::PI;

use nalgebra::{Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};

use crate::sim::VehicleState;
use crate::sim::MAX_SPEED;

/// Kinematic bicycle geometry and actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BicycleParams {
    pub l_f: f64,
    pub l_r: f64,
    pub a_max_ctrl: f64,
    pub delta_max: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self { l_f: 1.2, l_r: 1.6, a_max_ctrl: 0.5 * 9.81, delta_max: PI / 8.0 }
    }
}

impl BicycleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn slip_angle(&self, delta: f64) -> f64 {
        (self.l_r * delta.tan() / self.wheelbase()).atan()
    }

    /// Derivative of the slip angle with respect to the steering angle.
    pub fn slip_angle_slope(&self, delta: f64) -> f64 {
        let l = self.wheelbase();
        let (s, c) = delta.sin_cos();
        self.l_r * l / (l * l * c * c + self.l_r * self.l_r * s * s)
    }

    pub fn is_valid(&self) -> bool {
        self.l_f > 0.0 && self.l_r > 0.0 && self.a_max_ctrl > 0.0 && self.delta_max > 0.0 && self.delta_max < PI / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel: f64,
    pub steer: f64,
}

impl ControlInput {
    pub fn clamped(self, p: &BicycleParams) -> Self {
        Self {
            accel: self.accel.clamp(-p.a_max_ctrl, p.a_max_ctrl),
            steer: self.steer.clamp(-p.delta_max, p.delta_max),
        }
    }
}

/// State derivative `[ẋ, ẏ, v̇, φ̇]` of the kinematic bicycle for state `[x, y, v, φ]`.
pub fn bicycle_rhs(state: &[f64; 4], u: ControlInput, p: &BicycleParams) -> [f64; 4] {
    let [_, _, v, phi] = *state;
    let beta = p.slip_angle(u.steer);
    [v * (phi + beta).cos(), v * (phi + beta).sin(), u.accel, v / p.wheelbase() * beta.sin()]
}

/// One forward-Euler step of the bicycle model with `u` held constant.
pub fn integrate_state(state: &[f64; 4], u: ControlInput, p: &BicycleParams, dt: f64) -> [f64; 4] {
    let k = bicycle_rhs(state, u, p);
    std::array::from_fn(|i| state[i] + dt * k[i])
}

/// Advances a vehicle by `dt`, keeping speed in `[0, MAX_SPEED]` and heading in `(-π, π]`.
pub fn integrate_bicycle(vehicle: &VehicleState, u: ControlInput, p: &BicycleParams, dt: f64) -> VehicleState {
    let [x, y, v, phi] = integrate_state(&[vehicle.x, vehicle.y, vehicle.v, vehicle.phi], u, p, dt);
    VehicleState { x, y, v: v.clamp(0.0, MAX_SPEED), phi: wrap_angle(phi), ..*vehicle }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Jacobians `(∂f/∂X, ∂f/∂U)` of the bicycle model at `(v, φ, δ)`.
pub fn linearize(v: f64, phi: f64, delta: f64, p: &BicycleParams) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let l = p.wheelbase();
    let beta = p.slip_angle(delta);
    let db = p.slip_angle_slope(delta);
    let (s, c) = (phi + beta).sin_cos();
    let mut a = Matrix4::zeros();
    a[(0, 2)] = c;
    a[(0, 3)] = -v * s;
    a[(1, 2)] = s;
    a[(1, 3)] = v * c;
    a[(3, 2)] = beta.sin() / l;
    let mut b = Matrix4x2::zeros();
    b[(2, 0)] = 1.0;
    b[(0, 1)] = -v * s * db;
    b[(1, 1)] = v * c * db;
    b[(3, 1)] = v / l * beta.cos() * db;
    (a, b)
}

/// Forward-Euler discretization `(I + A·dt, B·dt)`.
pub fn discretize(a: &Matrix4<f64>, b: &Matrix4x2<f64>, dt: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    (a * dt + Matrix4::identity(), b * dt)
}
