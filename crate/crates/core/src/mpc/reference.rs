use serde::{Deserialize, Serialize};

use crate::action::DiscreteAction;
use crate::sim::{Lane, RoadGeometry, VehicleState};

/// Speed the ego should track after `action` is decided at speed `v_t`.
pub fn reference_speed(v_t: f64, action: DiscreteAction, delta_v: f64) -> f64 {
    match action {
        DiscreteAction::Faster => v_t + delta_v,
        DiscreteAction::Slower => (v_t - delta_v).max(0.0),
        _ => v_t,
    }
}

/// Lane and speed to track over one decision period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionTarget {
    pub lane: Lane,
    pub y: f64,
    pub v_r: f64,
}

impl DecisionTarget {
    pub fn new(ego: &VehicleState, action: DiscreteAction, geometry: &RoadGeometry, delta_v: f64) -> Self {
        let lane = geometry.target_lane(ego.lane, ego.x, action);
        Self { lane, y: geometry.lane_center(lane), v_r: reference_speed(ego.v, action, delta_v) }
    }

    /// Holds the current lane and speed.
    pub fn hold(ego: &VehicleState, geometry: &RoadGeometry) -> Self {
        Self { lane: ego.lane, y: geometry.lane_center(ego.lane), v_r: ego.v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RefPoint {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub phi: f64,
    pub delta: f64,
}

impl RefPoint {
    pub fn state(&self) -> [f64; 4] {
        [self.x, self.y, self.v, self.phi]
    }
}

/// Centerline reference marched at constant arc-length speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    /// Projection of the ego onto the target centerline.
    pub origin: RefPoint,
    /// Stages `1..=N`.
    pub points: Vec<RefPoint>,
    pub dt: f64,
}

impl ReferenceTrajectory {
    pub fn horizon(&self) -> usize {
        self.points.len()
    }

    /// Stage `k` in `0..=N`, where stage 0 is the origin.
    pub fn stage(&self, k: usize) -> &RefPoint {
        if k == 0 {
            &self.origin
        } else {
            &self.points[k - 1]
        }
    }
}

/// Straight-road reference: `s(k) = s(k-1) + v_r·dt` starting at the ego's
/// longitudinal position, on the target centerline with zero heading and steering.
pub fn reference_for_target(ego: &VehicleState, target: &DecisionTarget, horizon: usize, dt: f64) -> ReferenceTrajectory {
    let at = |s: f64| RefPoint { x: s, y: target.y, v: target.v_r, phi: 0.0, delta: 0.0 };
    let mut s = ego.x;
    let points = (0..horizon)
        .map(|_| {
            s += target.v_r * dt;
            at(s)
        })
        .collect();
    ReferenceTrajectory { origin: at(ego.x), points, dt }
}

pub fn build_reference(
    ego: &VehicleState,
    action: DiscreteAction,
    geometry: &RoadGeometry,
    delta_v: f64,
    horizon: usize,
    dt: f64,
) -> ReferenceTrajectory {
    reference_for_target(ego, &DecisionTarget::new(ego, action, geometry, delta_v), horizon, dt)
}
