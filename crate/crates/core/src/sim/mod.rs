//! Deterministic single-lane on-ramp merging environment.
//!
//! World frame: `x` runs along the road, `y` points left. The main lane is
//! centered on `y = 0` and the ramp lane on `y = -lane_width`. The ego spawns
//! at `x = 0` on the ramp; lane changes onto the main lane are possible inside
//! the merge zone `[ramp_length, ramp_length + merge_zone_length)` and the ramp
//! ends at the far edge of that zone.

mod env;
mod geometry;
mod idm;
mod observation;
mod signals;
mod traffic;
mod vehicle;

pub use env::{EnvConfig, MergeEnv, StepInfo, StepSignal, TrafficVehicle};
pub use geometry::{Lane, RoadGeometry};
pub use idm::{idm_acceleration, IdmParams};
pub use observation::{observe, EgoFeatures, FeatureRow, Observation, OBS_FEATURES};
pub use signals::{
    assess_risk, lane_occupied, occupancy_test, risk_cost, speed_reward, CostConfig, RewardConfig,
    RiskFlags, RiskInputs,
};
pub use traffic::{spawn_traffic, DensityLabel, TrafficConfig};
pub use vehicle::{overlap, VehicleState, MAX_SPEED};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("episode already terminated; call reset before stepping")]
    EpisodeTerminated,
    #[error("controller failed: {0}")]
    Controller(String),
}
