//! Reward and cost terms.

use serde::{Deserialize, Serialize};

use super::geometry::{Lane, RoadGeometry};
use super::observation::{FeatureRow, Observation};
use super::vehicle::{overlap, VehicleState};
use crate::mpc::PredictedStates;
use crate::shield::forecast_x;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Width of the speed band, as a fraction of the traffic speed.
    pub kappa: f64,
    pub collision: f64,
    pub goal: f64,
    pub speed_bonus: f64,
    pub speed_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { kappa: 0.1, collision: -1.0, goal: 1.0, speed_bonus: 0.1, speed_penalty: -0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub collision: f64,
    /// Charged once per triggered risky situation per decision step.
    pub risk: f64,
    pub unexpected: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { collision: 1.0, risk: 0.1, unexpected: 0.05 }
    }
}

pub fn speed_reward(v_ego: f64, v_ave: f64, cfg: &RewardConfig) -> f64 {
    if (v_ego - v_ave).abs() <= cfg.kappa * v_ave {
        cfg.speed_bonus
    } else {
        cfg.speed_penalty
    }
}

/// A vehicle occupies the target lane when it is almost abreast and moving at
/// almost the same speed as the ego.
pub fn occupancy_test(row: &FeatureRow) -> bool {
    row.p > 0.5 && row.vx.abs() <= 1.5 && row.x.abs() <= 5.0
}

pub fn lane_occupied(obs: &Observation) -> bool {
    obs.rows.iter().any(occupancy_test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RiskFlags {
    pub fail_to_merge: bool,
    pub predicted_collision: bool,
    pub hard_to_merge: bool,
    pub unexpected_decision: bool,
}

impl RiskFlags {
    pub fn risky_situations(&self) -> usize {
        [self.fail_to_merge, self.predicted_collision, self.hard_to_merge]
            .iter()
            .filter(|f| **f)
            .count()
    }
}

pub struct RiskInputs<'a> {
    pub ego: &'a VehicleState,
    pub obs: &'a Observation,
    /// Prediction for the action that is actually executed.
    pub prediction: &'a PredictedStates,
    pub neighbors: &'a [VehicleState],
    pub geometry: &'a RoadGeometry,
    /// The raw decision was flagged as unexpected by the shield rules.
    pub unexpected: bool,
}

pub fn assess_risk(inputs: &RiskInputs<'_>) -> RiskFlags {
    let g = inputs.geometry;
    let p = inputs.prediction.at_sigma();
    let predicted_ego = VehicleState { x: p.x, y: p.y, v: p.v, phi: p.phi, ..*inputs.ego };
    let horizon_t = inputs.prediction.sigma as f64 * inputs.prediction.dt;

    let fail_to_merge =
        p.x + 0.5 * inputs.ego.length >= g.merge_end() && g.lane_of_y(p.y) == Lane::Ramp;
    let predicted_collision = inputs.neighbors.iter().any(|n| {
        let future = VehicleState { x: forecast_x(n, horizon_t), ..*n };
        overlap(&predicted_ego, &future)
    });
    let merged = g.lane_of_y(inputs.ego.y) == Lane::Main;
    let hard_to_merge = !merged && inputs.ego.x >= g.merge_start() && lane_occupied(inputs.obs);

    RiskFlags { fail_to_merge, predicted_collision, hard_to_merge, unexpected_decision: inputs.unexpected }
}

/// `c_r + c_u` for one decision step. The collision term is added by the
/// environment once the step has been simulated.
pub fn risk_cost(flags: &RiskFlags, cfg: &CostConfig) -> f64 {
    let mut c = cfg.risk * flags.risky_situations() as f64;
    if flags.unexpected_decision {
        c += cfg.unexpected;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::PredictedPoint;
    use crate::sim::observation::observe;

    fn row(x: f64, vx: f64) -> FeatureRow {
        FeatureRow { p: 1.0, x, y: 5.0, vx, vy: 0.0 }
    }

    fn obs_with(rows: Vec<FeatureRow>) -> Observation {
        let mut rows = rows;
        rows.resize(5, FeatureRow::default());
        Observation { rows, ego: Default::default() }
    }

    #[test]
    fn speed_reward_band_is_inclusive() {
        let cfg = RewardConfig::default();
        assert_eq!(speed_reward(20.0, 20.0, &cfg), 0.1);
        assert_eq!(speed_reward(25.0, 20.0, &cfg), -0.5);
        assert_eq!(speed_reward(22.0, 20.0, &cfg), 0.1);
        assert_eq!(speed_reward(17.9, 20.0, &cfg), -0.5);
    }

    #[test]
    fn occupancy_thresholds() {
        assert!(lane_occupied(&obs_with(vec![row(4.0, 1.0)])));
        assert!(!lane_occupied(&obs_with(vec![row(4.0, 2.0)])));
        assert!(!lane_occupied(&obs_with(vec![row(6.0, 0.0)])));
        assert!(!lane_occupied(&obs_with(vec![])));
        let mut padded = row(0.0, 0.0);
        padded.p = 0.0;
        assert!(!lane_occupied(&obs_with(vec![padded])));
    }

    fn prediction_at(x: f64, y: f64) -> PredictedStates {
        let pt = PredictedPoint { x, y, v: 20.0, phi: 0.0 };
        PredictedStates { points: vec![pt; 10], sigma: 5, dt: 0.1 }
    }

    #[test]
    fn quiet_situation_costs_nothing() {
        let g = RoadGeometry::default();
        let ego = VehicleState::new(40.0, -5.0, 20.0, 0.0, Lane::Ramp);
        let traffic = [VehicleState::new(200.0, 0.0, 20.0, 0.0, Lane::Main)];
        let obs = observe(&ego, &traffic, 5, 100.0, &g);
        let pred = prediction_at(50.0, -5.0);
        let flags = assess_risk(&RiskInputs {
            ego: &ego,
            obs: &obs,
            prediction: &pred,
            neighbors: &traffic,
            geometry: &g,
            unexpected: false,
        });
        assert_eq!(flags, RiskFlags::default());
        assert_eq!(risk_cost(&flags, &CostConfig::default()), 0.0);
    }

    #[test]
    fn abreast_occupier_in_merge_zone_is_hard_to_merge() {
        let g = RoadGeometry::default();
        let ego = VehicleState::new(100.0, -5.0, 20.0, 0.0, Lane::Ramp);
        let traffic = [VehicleState::new(103.0, 0.0, 20.5, 0.0, Lane::Main)];
        let obs = observe(&ego, &traffic, 5, 100.0, &g);
        let pred = prediction_at(110.0, -5.0);
        let flags = assess_risk(&RiskInputs {
            ego: &ego,
            obs: &obs,
            prediction: &pred,
            neighbors: &traffic,
            geometry: &g,
            unexpected: false,
        });
        assert!(flags.hard_to_merge);
        assert!(!flags.predicted_collision);
        assert!((risk_cost(&flags, &CostConfig::default()) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn predicted_overrun_of_the_ramp_is_fail_to_merge() {
        let g = RoadGeometry::default();
        let ego = VehicleState::new(140.0, -5.0, 20.0, 0.0, Lane::Ramp);
        let obs = observe(&ego, &[], 5, 100.0, &g);
        let pred = prediction_at(150.0, -5.0);
        let flags = assess_risk(&RiskInputs {
            ego: &ego,
            obs: &obs,
            prediction: &pred,
            neighbors: &[],
            geometry: &g,
            unexpected: true,
        });
        assert!(flags.fail_to_merge);
        let c = risk_cost(&flags, &CostConfig::default());
        assert!((c - 0.15).abs() < 1e-12);
    }

    #[test]
    fn predicted_overlap_with_forecast_neighbor() {
        let g = RoadGeometry::default();
        let ego = VehicleState::new(100.0, -3.0, 20.0, 0.0, Lane::Main);
        // Neighbor at 10 m/s behind reaches x = 111 after 0.5 s.
        let n = [VehicleState::new(106.0, 0.0, 10.0, 0.0, Lane::Main)];
        let obs = observe(&ego, &n, 5, 100.0, &g);
        let pred = prediction_at(110.0, -0.5);
        let flags = assess_risk(&RiskInputs {
            ego: &ego,
            obs: &obs,
            prediction: &pred,
            neighbors: &n,
            geometry: &g,
            unexpected: false,
        });
        assert!(flags.predicted_collision);
    }
}
