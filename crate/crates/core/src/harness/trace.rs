//! Per-tick episode traces.
//!
//! One row per simulation tick. Reward and cost belong to the decision and are
//! written on the last tick of its window; the other ticks carry zeros.

use std::fmt::Write as _;

use crate::pipeline::Decision;
use crate::shield::Situation;
use crate::sim::{MergeEnv, StepInfo};
use crate::DiscreteAction;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub decision: u32,
    pub ego_x: f64,
    pub ego_y: f64,
    pub ego_v: f64,
    pub ego_phi: f64,
    pub accel: f64,
    pub steer: f64,
    pub action_raw: DiscreteAction,
    pub action_safe: DiscreteAction,
    pub situation: Situation,
    pub pred_x_sigma: f64,
    pub pred_y_sigma: f64,
    pub reward: f64,
    pub cost: f64,
    pub flags: StepInfo,
}

pub const TRACE_HEADER: &str =
    "t,decision,ego_x,ego_y,ego_v,ego_phi,accel,steer,action_raw,action_safe,situation,pred_x_sigma,pred_y_sigma,reward,cost,done_flags";

impl TraceRow {
    /// Row for the tick `env` has just completed. Decision fields stay at
    /// their defaults until [`finish_decision`] stamps them.
    pub fn from_tick(env: &MergeEnv, decision: u32) -> Self {
        let e = env.ego();
        let u = env.last_control();
        Self {
            t: env.time(),
            decision,
            ego_x: e.x,
            ego_y: e.y,
            ego_v: e.v,
            ego_phi: e.phi,
            accel: u.accel,
            steer: u.steer,
            action_raw: DiscreteAction::Idle,
            action_safe: DiscreteAction::Idle,
            situation: Situation::None,
            pred_x_sigma: f64::NAN,
            pred_y_sigma: f64::NAN,
            reward: 0.0,
            cost: 0.0,
            flags: env.last_info(),
        }
    }

    pub fn csv(&self) -> String {
        let mut s = String::with_capacity(160);
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.decision,
            self.ego_x,
            self.ego_y,
            self.ego_v,
            self.ego_phi,
            self.accel,
            self.steer,
            self.action_raw,
            self.action_safe,
            self.situation,
            self.pred_x_sigma,
            self.pred_y_sigma,
            self.reward,
            self.cost,
            self.flags.flag_string()
        )
        .expect("writing to a string");
        s
    }

    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 16 {
            return None;
        }
        let n = |i: usize| f[i].parse::<f64>().ok();
        Some(Self {
            t: n(0)?,
            decision: f[1].parse().ok()?,
            ego_x: n(2)?,
            ego_y: n(3)?,
            ego_v: n(4)?,
            ego_phi: n(5)?,
            accel: n(6)?,
            steer: n(7)?,
            action_raw: f[8].parse().ok()?,
            action_safe: f[9].parse().ok()?,
            situation: Situation::from_name(f[10])?,
            pred_x_sigma: n(11)?,
            pred_y_sigma: n(12)?,
            reward: n(13)?,
            cost: n(14)?,
            flags: StepInfo::parse_flags(f[15])?,
        })
    }
}

/// Stamps the rows of one decision with its actions and prediction, and
/// writes reward and cost onto the final tick.
pub fn finish_decision(rows: &mut [TraceRow], d: &Decision) {
    for r in rows.iter_mut() {
        r.action_raw = d.raw;
        r.action_safe = d.safe();
        r.situation = d.outcome.situation;
        r.pred_x_sigma = d.prediction.x;
        r.pred_y_sigma = d.prediction.y;
    }
    if let Some(last) = rows.last_mut() {
        last.reward = d.signal.reward;
        last.cost = d.signal.cost;
    }
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(160 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Vec<TraceRow>, HarnessError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TRACE_HEADER) {
        return Err(HarnessError::Parse("trace header mismatch".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| TraceRow::parse(l).ok_or_else(|| HarnessError::Parse(format!("bad trace row {}", i + 2))))
        .collect()
}
