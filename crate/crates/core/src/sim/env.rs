use serde::{Deserialize, Serialize};

use super::geometry::{Lane, RoadGeometry};
use super::idm::idm_acceleration;
use super::observation::{observe, Observation};
use super::signals::{risk_cost, speed_reward, CostConfig, RewardConfig, RiskFlags};
use super::traffic::{spawn_traffic, TrafficConfig};
use super::vehicle::{overlap, VehicleState, MAX_SPEED};
use super::SimError;
use crate::action::DiscreteAction;
use crate::mpc::{integrate_bicycle, BicycleParams, ControlInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub geometry: RoadGeometry,
    pub traffic: TrafficConfig,
    pub reward: RewardConfig,
    pub cost: CostConfig,
    pub bicycle: BicycleParams,
    pub episode_cap_s: f64,
    pub sim_dt: f64,
    pub ticks_per_decision: u32,
    pub observed_vehicles: usize,
    pub observation_range: f64,
    pub ego_init_speed: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            geometry: RoadGeometry::default(),
            traffic: TrafficConfig::default(),
            reward: RewardConfig::default(),
            cost: CostConfig::default(),
            bicycle: BicycleParams::default(),
            episode_cap_s: 30.0,
            sim_dt: 0.1,
            ticks_per_decision: 5,
            observed_vehicles: 5,
            observation_range: 100.0,
            ego_init_speed: 20.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.geometry.validate()?;
        self.traffic.validate()?;
        if !(self.sim_dt > 0.0 && self.episode_cap_s > 0.0 && self.ticks_per_decision > 0) {
            return Err(SimError::InvalidConfig("timing parameters must be positive".into()));
        }
        if self.observed_vehicles == 0 {
            return Err(SimError::InvalidConfig("at least one observed vehicle is required".into()));
        }
        if !(0.0..=MAX_SPEED).contains(&self.ego_init_speed) {
            return Err(SimError::InvalidConfig("ego initial speed must lie in [0, 40]".into()));
        }
        Ok(())
    }

    pub fn decision_dt(&self) -> f64 {
        self.sim_dt * self.ticks_per_decision as f64
    }

    pub fn obs_dim(&self) -> usize {
        Observation::flat_dim(self.observed_vehicles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficVehicle {
    pub id: usize,
    pub state: VehicleState,
    pub desired_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub collided: bool,
    pub merged: bool,
    pub reached_goal: bool,
    pub timed_out: bool,
}

impl StepInfo {
    /// Four flags as `0`/`1` in the order collided, merged, reached_goal, timed_out.
    pub fn flag_string(&self) -> String {
        [self.collided, self.merged, self.reached_goal, self.timed_out]
            .iter()
            .map(|f| if *f { '1' } else { '0' })
            .collect()
    }

    pub fn parse_flags(s: &str) -> Option<Self> {
        let b: Vec<bool> = s
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<_>>()?;
        match b[..] {
            [collided, merged, reached_goal, timed_out] => {
                Some(Self { collided, merged, reached_goal, timed_out })
            }
            _ => None,
        }
    }
}

/// Outcome of one decision period.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepSignal {
    pub reward: f64,
    pub cost: f64,
    pub done: bool,
    pub info: StepInfo,
    pub r_safety: f64,
    pub r_goal: f64,
    pub r_speed: f64,
    pub c_collision: f64,
    pub c_risk: f64,
    /// Traffic speed the speed reward was measured against.
    pub v_ave: f64,
}

#[derive(Debug, Clone)]
pub struct MergeEnv {
    config: EnvConfig,
    seed: u64,
    ego: VehicleState,
    traffic: Vec<TrafficVehicle>,
    tick: u64,
    time: f64,
    done: bool,
    merge_time: Option<f64>,
    last_control: ControlInput,
    last_info: StepInfo,
}

impl MergeEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let mut env = Self {
            config,
            seed,
            ego: VehicleState::new(0.0, 0.0, 0.0, 0.0, Lane::Ramp),
            traffic: Vec::new(),
            tick: 0,
            time: 0.0,
            done: false,
            merge_time: None,
            last_control: ControlInput::default(),
            last_info: StepInfo::default(),
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        let c = &self.config;
        self.seed = seed;
        self.ego = VehicleState {
            length: c.traffic.vehicle_length,
            width: c.traffic.vehicle_width,
            ..VehicleState::new(0.0, c.geometry.lane_center(Lane::Ramp), c.ego_init_speed, 0.0, Lane::Ramp)
        };
        self.traffic = spawn_traffic(&c.traffic, seed)
            .into_iter()
            .enumerate()
            .map(|(i, state)| TrafficVehicle { id: i + 1, state, desired_speed: state.v })
            .collect();
        self.tick = 0;
        self.time = 0.0;
        self.done = false;
        self.merge_time = None;
        self.last_control = ControlInput::default();
        self.last_info = StepInfo::default();
        self.observation()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn geometry(&self) -> &RoadGeometry {
        &self.config.geometry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ego(&self) -> &VehicleState {
        &self.ego
    }

    pub fn traffic(&self) -> &[TrafficVehicle] {
        &self.traffic
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn merge_time(&self) -> Option<f64> {
        self.merge_time
    }

    pub fn last_control(&self) -> ControlInput {
        self.last_control
    }

    pub fn last_info(&self) -> StepInfo {
        self.last_info
    }

    pub fn merged(&self) -> bool {
        self.config.geometry.lane_of_y(self.ego.y) == Lane::Main
    }

    fn traffic_states(&self) -> Vec<VehicleState> {
        self.traffic.iter().map(|t| t.state).collect()
    }

    pub fn observation(&self) -> Observation {
        let c = &self.config;
        observe(&self.ego, &self.traffic_states(), c.observed_vehicles, c.observation_range, &c.geometry)
    }

    /// States of the vehicles that appear in the current observation.
    pub fn observed_vehicles(&self) -> Vec<VehicleState> {
        let c = &self.config;
        let mut near: Vec<(f64, usize)> = self
            .traffic
            .iter()
            .enumerate()
            .map(|(i, t)| ((t.state.x - self.ego.x).abs(), i))
            .filter(|(d, _)| *d <= c.observation_range)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.iter().take(c.observed_vehicles).map(|&(_, i)| self.traffic[i].state).collect()
    }

    /// Mean speed of mainline traffic within observation range; the ego's own
    /// speed when the road around it is empty.
    pub fn traffic_speed(&self) -> f64 {
        let (sum, n) = self
            .traffic
            .iter()
            .filter(|t| (t.state.x - self.ego.x).abs() <= self.config.observation_range)
            .fold((0.0, 0usize), |(s, n), t| (s + t.state.v, n + 1));
        if n == 0 {
            self.ego.v
        } else {
            sum / n as f64
        }
    }

    fn ego_blocks_main_lane(&self) -> bool {
        let g = &self.config.geometry;
        self.ego.y + 0.5 * self.ego.width > g.lane_center(Lane::Main) - 0.5 * g.lane_width
    }

    fn advance_traffic(&mut self, dt: f64) {
        self.traffic.sort_by(|a, b| b.state.x.total_cmp(&a.state.x).then(a.id.cmp(&b.id)));
        let ego_leads = self.ego_blocks_main_lane();
        let idm = self.config.traffic.idm;
        let accels: Vec<f64> = (0..self.traffic.len())
            .map(|i| {
                let me = &self.traffic[i];
                let mut leader = if i > 0 { Some(&self.traffic[i - 1].state) } else { None };
                if ego_leads && self.ego.x > me.state.x && leader.is_none_or(|l| self.ego.x < l.x) {
                    leader = Some(&self.ego);
                }
                idm_acceleration(leader, &me.state, &idm.with_desired_speed(me.desired_speed))
            })
            .collect();
        for (t, a) in self.traffic.iter_mut().zip(accels) {
            let v0 = t.state.v;
            let v1 = (v0 + a * dt).clamp(0.0, MAX_SPEED);
            t.state.x += 0.5 * (v0 + v1) * dt;
            t.state.v = v1;
        }
    }

    fn ego_collides(&self) -> bool {
        let g = &self.config.geometry;
        let e = &self.ego;
        if self.traffic.iter().any(|t| overlap(e, &t.state)) {
            return true;
        }
        if g.lane_of_y(e.y) == Lane::Ramp && e.x + 0.5 * e.length >= g.merge_end() {
            return true;
        }
        let (right, left) = g.road_edges(e.x);
        e.y > left || e.y < right
    }

    /// Simulates one decision period with `action` already shielded.
    ///
    /// `controller` is queried once per simulation tick with the current ego
    /// state and its output is held for that tick. `risk` carries the
    /// prediction-based cost flags assessed before the step. `on_tick` sees the
    /// environment after every tick.
    pub fn step(
        &mut self,
        action: DiscreteAction,
        risk: &RiskFlags,
        controller: &mut dyn FnMut(&VehicleState) -> Result<ControlInput, SimError>,
        on_tick: &mut dyn FnMut(&MergeEnv),
    ) -> Result<(Observation, StepSignal), SimError> {
        if self.done {
            return Err(SimError::EpisodeTerminated);
        }
        let c = self.config;
        self.ego.lane = c.geometry.target_lane(self.ego.lane, self.ego.x, action);

        let mut info = StepInfo::default();
        for _ in 0..c.ticks_per_decision {
            let u = controller(&self.ego)?.clamped(&c.bicycle);
            self.last_control = u;
            self.ego = integrate_bicycle(&self.ego, u, &c.bicycle, c.sim_dt);
            self.advance_traffic(c.sim_dt);
            self.tick += 1;
            self.time = self.tick as f64 * c.sim_dt;

            info.merged = self.merged();
            if info.merged && self.merge_time.is_none() {
                self.merge_time = Some(self.time);
            }
            info.collided = self.ego_collides();
            info.reached_goal = !info.collided && info.merged && self.ego.x >= c.geometry.goal_x;
            let terminal = info.collided || info.reached_goal;
            if !terminal && self.time >= c.episode_cap_s - 1e-9 {
                info.timed_out = true;
            }
            self.last_info = info;
            self.done = terminal || info.timed_out;
            on_tick(self);
            if self.done {
                break;
            }
        }

        let r_safety = if info.collided { c.reward.collision } else { 0.0 };
        let r_goal = if info.reached_goal { c.reward.goal } else { 0.0 };
        let v_ave = self.traffic_speed();
        let r_speed = speed_reward(self.ego.v, v_ave, &c.reward);
        let c_collision = if info.collided { c.cost.collision } else { 0.0 };
        let c_risk = risk_cost(risk, &c.cost);
        let signal = StepSignal {
            reward: r_safety + r_goal + r_speed,
            cost: c_collision + c_risk,
            done: self.done,
            info,
            r_safety,
            r_goal,
            r_speed,
            c_collision,
            c_risk,
            v_ave,
        };
        Ok((self.observation(), signal))
    }
}
