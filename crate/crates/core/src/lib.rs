//! Generative 3D hand tracking on a 27-parameter kinematic model, optimized
//! per frame by constriction-coefficient particle swarm optimization, with a
//! runtime that can offload the optimization phases to a remote executor over
//! a bit-exact binary protocol or a deterministic simulated network.
//!
//! The crate is organized bottom-up:
//!
//! * [`kinematics`] — hand parameterization, forward kinematics, depth rendering
//! * [`objective`] — clamped depth-discrepancy score over a bounding box
//! * [`pso`] — the four-phase swarm optimizer with serializable state
//! * [`transport`] — wire codec, stream-socket client/server, simulated links
//! * [`worker`] — executes one offloadable task (a phase or a fused frame)
//! * [`offload`] — dispatch policies, latency estimation, frame optimization
//! * [`tracker`] — the serial per-frame loop with frame skipping
//! * [`bench`] — synthetic sequences, scenario matrix, report emission

pub mod bench;
pub mod config;
pub mod error;
pub mod kinematics;
pub mod objective;
pub mod offload;
pub mod pso;
pub mod rng;
pub mod tracker;
pub mod transport;
pub mod worker;

pub use config::Config;
pub use error::{Error, Result};
pub use kinematics::{CameraIntrinsics, DepthMap, HandGeometry, PoseVector, SpherePrimitiveSet};
pub use objective::{BoundingBox, ObjectiveConfig};
pub use offload::{Dispatcher, Granularity, PolicyConfig, PolicyMode};
pub use pso::{PsoConfig, SwarmState};
pub use tracker::{FrameClock, TrackRecord};
pub use transport::{Message, NetworkProfile, StepRequest, StepResult};
