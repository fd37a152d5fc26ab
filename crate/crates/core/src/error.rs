//! Crate-wide error type. Variants map onto the CLI exit-code classes:
//! configuration (2), transport (3), I/O (4); everything else is a plain
//! failure reported as exit code 1.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A pose violates its own invariants (zero quaternion, wrong arity).
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    /// The hand projects to nothing usable (behind camera, empty box).
    #[error("no observation: {0}")]
    NoObservation(String),

    /// A caller broke an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed bytes or a protocol-state violation on the wire.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Bad or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A send/receive/connect failed or timed out.
    #[error("transport error: {0}")]
    Transport(String),

    /// A task failed on every executor it was tried on.
    #[error("task failed: {0}")]
    Task(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code class for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Protocol(_) | Error::Transport(_) => 3,
            Error::Io(_) => 4,
            _ => 1,
        }
    }
}
