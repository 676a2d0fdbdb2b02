use serde::{Deserialize, Serialize};

use super::vehicle::VehicleState;

/// Intelligent driver model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    /// Desired speed. Traffic vehicles override this with their spawn speed.
    pub v0: f64,
    pub time_headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub delta: f64,
    pub s0: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { v0: 22.0, time_headway: 1.5, a_max: 3.0, b_comf: 3.0, delta: 4.0, s0: 2.0 }
    }
}

impl IdmParams {
    pub fn with_desired_speed(&self, v0: f64) -> Self {
        Self { v0, ..*self }
    }

    pub fn max_braking(&self) -> f64 {
        -2.0 * self.b_comf
    }
}

/// Bumper-to-bumper gap between `rear` and the vehicle ahead of it.
pub fn bumper_gap(front: &VehicleState, rear: &VehicleState) -> f64 {
    front.x - rear.x - 0.5 * (front.length + rear.length)
}

/// Canonical IDM acceleration of `rear`, clamped to `[-2 b_comf, a_max]`.
pub fn idm_acceleration(front: Option<&VehicleState>, rear: &VehicleState, params: &IdmParams) -> f64 {
    let v = rear.v.max(0.0);
    let free = if params.v0 > 0.0 {
        1.0 - (v / params.v0).powf(params.delta)
    } else {
        -1.0
    };
    let interaction = match front {
        None => 0.0,
        Some(front) => {
            let gap = bumper_gap(front, rear);
            if gap <= 0.0 {
                return params.max_braking();
            }
            let closing = v - front.v;
            let dynamic = v * params.time_headway
                + v * closing / (2.0 * (params.a_max * params.b_comf).sqrt());
            let desired = params.s0 + dynamic.max(0.0);
            (desired / gap).powi(2)
        }
    };
    (params.a_max * (free - interaction)).clamp(params.max_braking(), params.a_max)
}
