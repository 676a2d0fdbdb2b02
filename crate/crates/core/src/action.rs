use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// High-level maneuver chosen once per decision period.
///
/// The discriminant order is the network output order and must not change:
/// policy and critic heads index actions by `DiscreteAction::index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiscreteAction {
    Left,
    Right,
    Faster,
    Idle,
    Slower,
}

impl DiscreteAction {
    pub const COUNT: usize = 5;
    pub const ALL: [DiscreteAction; 5] = [
        DiscreteAction::Left,
        DiscreteAction::Right,
        DiscreteAction::Faster,
        DiscreteAction::Idle,
        DiscreteAction::Slower,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiscreteAction::Left => "LEFT",
            DiscreteAction::Right => "RIGHT",
            DiscreteAction::Faster => "FASTER",
            DiscreteAction::Idle => "IDLE",
            DiscreteAction::Slower => "SLOWER",
        }
    }
}

impl fmt::Display for DiscreteAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action `{0}`")]
pub struct ParseActionError(pub String);

impl FromStr for DiscreteAction {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LEFT" => Ok(DiscreteAction::Left),
            "RIGHT" => Ok(DiscreteAction::Right),
            "FASTER" => Ok(DiscreteAction::Faster),
            "IDLE" => Ok(DiscreteAction::Idle),
            "SLOWER" => Ok(DiscreteAction::Slower),
            _ => Err(ParseActionError(s.to_string())),
        }
    }
}
