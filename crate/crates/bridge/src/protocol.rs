//! Wire format: one JSON object per line, discriminated by `type`.

use std::path::PathBuf;

use onramp_core::sim::StepInfo;
use onramp_core::DiscreteAction;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionMode {
    /// Actions come from the client.
    #[default]
    Human,
    /// Actions come from a policy snapshot.
    PolicyReplay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pacing {
    /// Frames leave at the simulation rate.
    #[default]
    Realtime,
    /// As fast as the simulation runs.
    Unpaced,
    /// One decision per `action` message; for scripted clients.
    Lockstep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Spatial density ρ.
    pub density: f64,
    pub seed: u64,
    pub mode: SessionMode,
    pub pacing: Pacing,
    pub shield: bool,
    /// Required in replay mode.
    pub snapshot: Option<PathBuf>,
    /// Argmax of the replayed policy instead of sampling.
    pub greedy: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            density: 0.75,
            seed: 0,
            mode: SessionMode::Human,
            pacing: Pacing::Realtime,
            shield: true,
            snapshot: None,
            greedy: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleFrame {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
    pub is_ego: bool,
}

/// Ego speed (m/s), acceleration (m/s²), steering angle and yaw (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub v: f64,
    pub accel: f64,
    pub steer: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub session_id: u64,
    pub tick: u64,
    pub sim_time_s: f64,
    pub vehicles: Vec<VehicleFrame>,
    pub last_action_raw: DiscreteAction,
    pub last_action_safe: DiscreteAction,
    pub situation: String,
    /// Decision reward and cost, carried by the last tick of the decision.
    pub reward: f64,
    pub cost: f64,
    pub done_flags: StepInfo,
    pub kinematics: Kinematics,
}

impl FrameMessage {
    pub fn done(&self) -> bool {
        let f = self.done_flags;
        f.collided || f.reached_goal || f.timed_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Open {
        #[serde(default)]
        config: SessionConfig,
    },
    Action {
        session_id: u64,
        action: DiscreteAction,
    },
    Close {
        session_id: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Ack {
        session_id: u64,
        /// Type of the acknowledged message.
        of: String,
        /// Episode trace, on close.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace_csv: Option<String>,
    },
    Frame(Box<FrameMessage>),
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<u64>,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(session_id: Option<u64>, message: impl Into<String>) -> Self {
        ServerMessage::Error { session_id, message: message.into() }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages serialize");
        s.push('\n');
        s
    }
}

impl ClientMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("client messages serialize");
        s.push('\n');
        s
    }
}
