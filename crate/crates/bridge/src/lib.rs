//! Real-time session server for driving the merging simulation by hand or
//! replaying a trained policy.
//!
//! Clients speak newline-delimited JSON over TCP. Each message is an object
//! whose `type` is one of `open`, `ack`, `action`, `frame`, `close` or
//! `error`. A session streams one frame per simulation tick; the action
//! submitted last before a decision boundary is the one executed, IDLE when
//! none was submitted.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, FrameMessage, Kinematics, Pacing, ServerMessage, SessionConfig, SessionMode, VehicleFrame};
pub use server::{Broadcast, Server};
pub use session::Session;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BridgeError {
    #[error("session rejected: {0}")]
    Rejected(String),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("session {0} has ended")]
    Ended(u64),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Serves sessions on `bind:port` until the listener fails.
pub fn serve(bind: &str, port: u16) -> Result<(), BridgeError> {
    let server = Server::bind(&format!("{bind}:{port}"))?;
    eprintln!("listening on {}", server.local_addr()?);
    server.run()
}
