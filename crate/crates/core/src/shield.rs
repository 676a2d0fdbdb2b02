//! Rule-based action shield.
//!
//! A raw decision is replaced when its predicted outcome falls in one of three
//! unsafe sets: a left merge into a gap a neighbor will sweep through, a right
//! move after the ego has merged, or keeping speed while abreast of a vehicle
//! that occupies the target lane. Checks run in that order and the first match
//! wins.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::DiscreteAction;
use crate::mpc::PredictedStates;
use crate::sim::{occupancy_test, FeatureRow, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShieldConfig {
    pub d_x: f64,
    pub d_y: f64,
    pub sigma: usize,
    pub horizon: usize,
    pub dt: f64,
}

impl Default for ShieldConfig {
    fn default() -> Self {
        Self { d_x: 8.0, d_y: 4.0, sigma: 5, horizon: 10, dt: 0.1 }
    }
}

impl ShieldConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_x > 0.0 && self.d_y > 0.0 && self.dt > 0.0) {
            return Err("shield thresholds and dt must be positive".into());
        }
        if self.sigma == 0 || self.sigma > self.horizon {
            return Err(format!("sigma {} outside 1..={}", self.sigma, self.horizon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Situation {
    #[default]
    None,
    S1CollisionLeft,
    S2UnexpectedRight,
    S3CannotMerge,
}

impl Situation {
    pub fn name(self) -> &'static str {
        match self {
            Situation::None => "NONE",
            Situation::S1CollisionLeft => "S1_COLLISION_LEFT",
            Situation::S2UnexpectedRight => "S2_UNEXPECTED_RIGHT",
            Situation::S3CannotMerge => "S3_CANNOT_MERGE",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Situation::None, Situation::S1CollisionLeft, Situation::S2UnexpectedRight, Situation::S3CannotMerge]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

impl fmt::Display for Situation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShieldOutcome {
    pub safe_action: DiscreteAction,
    pub replaced: bool,
    pub situation: Situation,
}

impl ShieldOutcome {
    fn pass(raw: DiscreteAction) -> Self {
        Self { safe_action: raw, replaced: false, situation: Situation::None }
    }

    fn replace(safe_action: DiscreteAction, situation: Situation) -> Self {
        Self { safe_action, replaced: true, situation }
    }
}

/// Constant-speed longitudinal position after `t` seconds.
pub fn forecast_x(vehicle: &VehicleState, t: f64) -> f64 {
    vehicle.x + vehicle.v * t
}

/// Longitudinal positions now and `n` steps of `dt` ahead.
pub fn neighbor_forecast(vehicle: &VehicleState, n: usize, dt: f64) -> (f64, f64) {
    (vehicle.x, forecast_x(vehicle, n as f64 * dt))
}

/// Nearest neighbor that occupies the target lane relative to `ego`.
pub fn occupier<'a>(ego: &VehicleState, neighbors: &'a [VehicleState]) -> Option<&'a VehicleState> {
    neighbors
        .iter()
        .filter(|n| {
            let row = FeatureRow { p: 1.0, x: n.x - ego.x, y: n.y - ego.y, vx: n.vx() - ego.vx(), vy: n.vy() - ego.vy() };
            occupancy_test(&row)
        })
        .min_by(|a, b| (a.x - ego.x).abs().total_cmp(&(b.x - ego.x).abs()))
}

/// Applies the shield to `raw` given the prediction computed for `raw`.
pub fn shield(
    raw: DiscreteAction,
    ego: &VehicleState,
    pred: &PredictedStates,
    neighbors: &[VehicleState],
    merged: bool,
    cfg: &ShieldConfig,
) -> ShieldOutcome {
    let e = pred.at_sigma();
    match raw {
        DiscreteAction::Left => {
            let sweeps = neighbors.iter().any(|n| {
                let (x0, xn) = neighbor_forecast(n, cfg.horizon, cfg.dt);
                x0 <= e.x && e.x <= xn && (e.y - n.y).abs() <= cfg.d_y
            });
            if sweeps {
                return ShieldOutcome::replace(DiscreteAction::Slower, Situation::S1CollisionLeft);
            }
        }
        DiscreteAction::Right if merged => {
            return ShieldOutcome::replace(DiscreteAction::Idle, Situation::S2UnexpectedRight);
        }
        DiscreteAction::Faster | DiscreteAction::Idle if !merged => {
            if let Some(obj) = occupier(ego, neighbors) {
                let x_obj = forecast_x(obj, cfg.sigma as f64 * cfg.dt);
                if (e.x - x_obj).abs() <= cfg.d_x {
                    return ShieldOutcome::replace(DiscreteAction::Slower, Situation::S3CannotMerge);
                }
            }
        }
        _ => {}
    }
    ShieldOutcome::pass(raw)
}
