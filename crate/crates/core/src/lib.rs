//! Safe reinforcement learning for highway on-ramp merging.

pub mod action;
pub mod fuzzy;
pub mod harness;
pub mod mpc;
pub mod nn;
pub mod pipeline;
pub mod rl;
pub mod shield;
pub mod sim;

pub use action::DiscreteAction;
