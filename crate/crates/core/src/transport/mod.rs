//! Bit-exact binary wire protocol and the transports that carry it: a plain
//! stream-socket client/server pair and a deterministic simulated channel.
//!
//! Frame layout: 4-byte big-endian payload length (header excluded), 1 type
//! byte, then the payload. Everything on the wire is big-endian. Depth
//! samples travel as u16 millimeters; pose centers as f32; swarm state and
//! results as f64 so optimization resumes bit-exactly.

mod client;
mod codec;
mod server;
mod sim;

pub use client::TcpRemote;
pub use codec::{
    decode, decode_swarm_state, encode, encode_swarm_state, read_message, step_request_payload_size,
    step_result_payload_size, swarm_block_size, write_message, PROTOCOL_VERSION,
};
pub use server::{serve, ServerHandle};
pub use sim::{simulated_send, NetworkProfile, SimChannel, CALIBRATION_SLOT};

use crate::kinematics::{DepthMap, PoseVector};
use crate::pso::SwarmState;

/// Task kind discriminant shared by requests and dispatch decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    /// All four optimization phases in one task.
    FusedFrame,
    /// A single phase; state rides along for phases past the first.
    Phase,
}

impl TaskKind {
    pub fn as_byte(self) -> u8 {
        match self {
            TaskKind::FusedFrame => 0,
            TaskKind::Phase => 1,
        }
    }
}

/// Capability handshake payload: nothing executes until protocol version and
/// the numeric-contract digests match, since divergent geometry or optimizer
/// constants would silently produce divergent results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterInfo {
    pub protocol_version: u16,
    /// bit 0: fused-frame tasks, bit 1: phase tasks
    pub task_kinds: u8,
    pub geometry_digest: [u8; 32],
    pub config_digest: [u8; 32],
}

/// One offloadable unit of work: a fused frame or a single phase.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRequest {
    pub frame_index: u32,
    pub kind: TaskKind,
    pub phase_index: u8,
    pub seed: u64,
    pub center: PoseVector,
    pub observation: DepthMap,
    /// Present iff kind == Phase and phase_index > 0.
    pub swarm_state: Option<SwarmState>,
}

/// Result of one task. `phase_index` is the last phase executed (3 for a
/// fused frame), which makes swarm-state presence self-describing:
/// the block is present iff `phase_index < 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub frame_index: u32,
    pub phase_index: u8,
    pub gbest_pose: PoseVector,
    pub gbest_score: f64,
    pub swarm_state: Option<SwarmState>,
    pub server_exec_us: u32,
}

/// Everything that can cross the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Register(RegisterInfo),
    RegisterAck { executor_id: u32 },
    StepRequest(Box<StepRequest>),
    StepResult(Box<StepResult>),
    Error { code: u8, message: String },
    Ping,
    Pong,
}

/// Error codes carried by `Message::Error`.
pub mod error_code {
    pub const REGISTRATION_REFUSED: u8 = 1;
    pub const NOT_REGISTERED: u8 = 2;
    pub const EXECUTION_FAILED: u8 = 3;
    pub const MALFORMED: u8 = 4;
}
