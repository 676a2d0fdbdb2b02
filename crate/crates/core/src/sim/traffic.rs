use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::Lane;
use super::idm::IdmParams;
use super::vehicle::VehicleState;
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityLabel {
    Low,
    Medium,
    High,
}

impl DensityLabel {
    /// Low on [0.5, 0.7), medium on [0.7, 0.8], high on (0.8, 1.0].
    pub fn from_rho(rho: f64) -> Self {
        if rho < 0.7 {
            DensityLabel::Low
        } else if rho <= 0.8 {
            DensityLabel::Medium
        } else {
            DensityLabel::High
        }
    }

    /// Representative spatial density used when only a label is given.
    pub fn nominal_rho(self) -> f64 {
        match self {
            DensityLabel::Low => 0.6,
            DensityLabel::Medium => 0.75,
            DensityLabel::High => 0.9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DensityLabel::Low => "low",
            DensityLabel::Medium => "medium",
            DensityLabel::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    /// Spatial density coefficient in `[0.5, 1.0]`.
    pub rho: f64,
    /// Base bumper-to-bumper safety gap.
    pub d_s: f64,
    pub v_init_min: f64,
    pub v_init_max: f64,
    pub idm: IdmParams,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// The lead vehicle spawns uniformly in `[spawn_front_x, spawn_front_x + spawn_phase]`.
    pub spawn_front_x: f64,
    pub spawn_phase: f64,
    /// Vehicles are added behind the leader until this position is passed.
    pub spawn_tail_x: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            rho: 0.75,
            d_s: 10.0,
            v_init_min: 17.0,
            v_init_max: 27.0,
            idm: IdmParams::default(),
            vehicle_length: 5.0,
            vehicle_width: 2.0,
            spawn_front_x: 260.0,
            spawn_phase: 40.0,
            spawn_tail_x: -300.0,
        }
    }
}

impl TrafficConfig {
    pub fn with_rho(rho: f64) -> Self {
        Self { rho, ..Default::default() }
    }

    pub fn density_label(&self) -> DensityLabel {
        DensityLabel::from_rho(self.rho)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.5..=1.0).contains(&self.rho) {
            return Err(SimError::InvalidConfig(format!("rho must lie in [0.5, 1.0], got {}", self.rho)));
        }
        if !(self.d_s.is_finite() && self.d_s > 0.0) {
            return Err(SimError::InvalidConfig(format!("d_s must be positive, got {}", self.d_s)));
        }
        if !(self.v_init_min >= 0.0 && self.v_init_min <= self.v_init_max && self.v_init_max <= 40.0) {
            return Err(SimError::InvalidConfig(format!(
                "initial speed range [{}, {}] must lie within [0, 40]",
                self.v_init_min, self.v_init_max
            )));
        }
        if !(self.vehicle_length > 0.0 && self.vehicle_width > 0.0) {
            return Err(SimError::InvalidConfig("vehicle dimensions must be positive".into()));
        }
        if !(self.spawn_tail_x < self.spawn_front_x && self.spawn_phase >= 0.0) {
            return Err(SimError::InvalidConfig("spawn window is empty".into()));
        }
        let idm = &self.idm;
        if !(idm.time_headway > 0.0 && idm.a_max > 0.0 && idm.b_comf > 0.0 && idm.delta > 0.0 && idm.s0 >= 0.0) {
            return Err(SimError::InvalidConfig("IDM parameters must be positive".into()));
        }
        Ok(())
    }

    /// Bumper-to-bumper spawn gap ahead of a vehicle travelling at `v_rear`.
    pub fn spawn_gap(&self, v_rear: f64) -> f64 {
        self.d_s + self.rho * v_rear
    }
}

/// Main-lane platoon, ordered front to rear.
///
/// Speeds are i.i.d. uniform on `[v_init_min, v_init_max]` and each gap follows
/// `d_s + rho * v_rear`. The same seed and config always produce the same list.
pub fn spawn_traffic(config: &TrafficConfig, seed: u64) -> Vec<VehicleState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speed = |rng: &mut ChaCha8Rng| {
        if config.v_init_max > config.v_init_min {
            rng.gen_range(config.v_init_min..config.v_init_max)
        } else {
            config.v_init_min
        }
    };
    let front_x = config.spawn_front_x + config.spawn_phase * rng.gen::<f64>();
    let mut out = Vec::new();
    let mut front = VehicleState {
        length: config.vehicle_length,
        width: config.vehicle_width,
        ..VehicleState::new(front_x, 0.0, speed(&mut rng), 0.0, Lane::Main)
    };
    out.push(front);
    loop {
        let v = speed(&mut rng);
        let x = front.x - config.vehicle_length - config.spawn_gap(v);
        if x < config.spawn_tail_x {
            break;
        }
        front = VehicleState { x, v, ..front };
        out.push(front);
    }
    out
}
