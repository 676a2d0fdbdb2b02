use serde::{Deserialize, Serialize};

use super::SimError;
use crate::action::DiscreteAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Main,
    Ramp,
}

impl Lane {
    pub fn id(self) -> u8 {
        match self {
            Lane::Main => 0,
            Lane::Ramp => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadGeometry {
    /// Ego spawn point to the start of the merge zone.
    pub ramp_length: f64,
    pub merge_zone_length: f64,
    pub lane_width: f64,
    pub main_lane_count: usize,
    /// End of the evaluated segment, measured on the main lane.
    pub goal_x: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            ramp_length: 80.0,
            merge_zone_length: 70.0,
            lane_width: 5.0,
            main_lane_count: 1,
            goal_x: 200.0,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("ramp_length", self.ramp_length),
            ("merge_zone_length", self.merge_zone_length),
            ("lane_width", self.lane_width),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if self.main_lane_count != 1 {
            return Err(SimError::InvalidConfig("only a single main lane is supported".into()));
        }
        if !(self.goal_x > self.merge_end()) {
            return Err(SimError::InvalidConfig(format!(
                "goal_x ({}) must lie beyond the merge zone end ({})",
                self.goal_x,
                self.merge_end()
            )));
        }
        Ok(())
    }

    pub fn merge_start(&self) -> f64 {
        self.ramp_length
    }

    /// Also the physical end of the ramp.
    pub fn merge_end(&self) -> f64 {
        self.ramp_length + self.merge_zone_length
    }

    pub fn lane_center(&self, lane: Lane) -> f64 {
        match lane {
            Lane::Main => 0.0,
            Lane::Ramp => -self.lane_width,
        }
    }

    /// Lane whose centerline is closest to `y`.
    pub fn lane_of_y(&self, y: f64) -> Lane {
        if y > -0.5 * self.lane_width {
            Lane::Main
        } else {
            Lane::Ramp
        }
    }

    pub fn in_merge_zone(&self, x: f64) -> bool {
        x >= self.merge_start() && x < self.merge_end()
    }

    /// Lane the ego should track after `action`, given the lane it is assigned to.
    ///
    /// LEFT leads from the ramp onto the main lane, RIGHT back onto the ramp; both
    /// are only available inside the merge zone. Every other action keeps the lane.
    pub fn target_lane(&self, current: Lane, x: f64, action: DiscreteAction) -> Lane {
        match (action, current) {
            (DiscreteAction::Left, Lane::Ramp) if self.in_merge_zone(x) => Lane::Main,
            (DiscreteAction::Right, Lane::Main) if self.in_merge_zone(x) => Lane::Ramp,
            _ => current,
        }
    }

    /// Outer road edges `(right, left)` in `y`.
    pub fn road_edges(&self, x: f64) -> (f64, f64) {
        let left = self.lane_center(Lane::Main) + 0.5 * self.lane_width;
        let right = if x < self.merge_end() {
            self.lane_center(Lane::Ramp) - 0.5 * self.lane_width
        } else {
            self.lane_center(Lane::Main) - 0.5 * self.lane_width
        };
        (right, left)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_zone_begins_where_ramp_ends() {
        let g = RoadGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.merge_start(), 80.0);
        assert_eq!(g.merge_end(), 150.0);
        assert_eq!(g.goal_x, 200.0);
    }

    #[test]
    fn rejects_non_positive_lengths() {
        let g = RoadGeometry { lane_width: 0.0, ..Default::default() };
        assert!(g.validate().is_err());
        let g = RoadGeometry { goal_x: 120.0, ..Default::default() };
        assert!(g.validate().is_err());
    }

    #[test]
    fn lane_changes_only_inside_merge_zone() {
        let g = RoadGeometry::default();
        assert_eq!(g.target_lane(Lane::Ramp, 40.0, DiscreteAction::Left), Lane::Ramp);
        assert_eq!(g.target_lane(Lane::Ramp, 100.0, DiscreteAction::Left), Lane::Main);
        assert_eq!(g.target_lane(Lane::Main, 100.0, DiscreteAction::Right), Lane::Ramp);
        assert_eq!(g.target_lane(Lane::Main, 170.0, DiscreteAction::Right), Lane::Main);
        assert_eq!(g.target_lane(Lane::Ramp, 100.0, DiscreteAction::Right), Lane::Ramp);
        assert_eq!(g.target_lane(Lane::Main, 100.0, DiscreteAction::Left), Lane::Main);
        assert_eq!(g.target_lane(Lane::Ramp, 100.0, DiscreteAction::Faster), Lane::Ramp);
    }

    #[test]
    fn lane_of_y_splits_at_the_lane_boundary() {
        let g = RoadGeometry::default();
        assert_eq!(g.lane_of_y(0.0), Lane::Main);
        assert_eq!(g.lane_of_y(-2.4), Lane::Main);
        assert_eq!(g.lane_of_y(-2.6), Lane::Ramp);
        assert_eq!(g.lane_of_y(-5.0), Lane::Ramp);
    }
}
