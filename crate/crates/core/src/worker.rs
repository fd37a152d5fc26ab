//! Executes one offloadable task — a single optimization phase or a fused
//! whole-frame — from a self-contained [`StepRequest`]. Both the local
//! executor and the remote server funnel through [`execute_step`], which is
//! what makes "where a task runs" invisible in the numbers.

use crate::error::{Error, Result};
use crate::kinematics::{clamp_pose_to_limits, CameraIntrinsics, HandGeometry, POSE_DIMS};
use crate::objective::{bounding_box, DepthObjective, ObjectiveConfig};
use crate::pso::{init_swarm, run_phase, PsoConfig, PsoContext, PHASES};
use crate::transport::{StepRequest, StepResult, TaskKind};

/// The numeric contract an executor runs under. Registration refuses peers
/// whose digests differ, so every executor holding the same context produces
/// bit-identical results for the same request.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerContext {
    pub geometry: HandGeometry,
    pub camera: CameraIntrinsics,
    pub objective: ObjectiveConfig,
    pub pso: PsoConfig,
}

impl WorkerContext {
    pub fn new(
        geometry: HandGeometry,
        camera: CameraIntrinsics,
        objective: ObjectiveConfig,
        pso: PsoConfig,
    ) -> Result<Self> {
        geometry.validate()?;
        camera.validate()?;
        objective.validate()?;
        pso.validate()?;
        Ok(WorkerContext {
            geometry,
            camera,
            objective,
            pso,
        })
    }

    pub fn with_defaults() -> Self {
        WorkerContext {
            geometry: HandGeometry::default(),
            camera: CameraIntrinsics::default(),
            objective: ObjectiveConfig::default(),
            pso: PsoConfig::default(),
        }
    }

    /// Phases a task spans, for time modeling and estimation.
    pub fn phases_in_task(kind: TaskKind) -> u32 {
        match kind {
            TaskKind::FusedFrame => PHASES,
            TaskKind::Phase => 1,
        }
    }
}

/// Runs the task described by `req` and assembles the reply.
///
/// `extent_scale` is the per-frame initialization widening applied after
/// frame skips. It is in-process session state, not part of the wire format;
/// the socket server always runs with the unit scale (see [`UNIT_SCALE`]).
pub fn execute_step(
    req: &StepRequest,
    wc: &WorkerContext,
    extent_scale: &[f64; POSE_DIMS],
) -> Result<StepResult> {
    if req.observation.width != wc.camera.width || req.observation.height != wc.camera.height {
        return Err(Error::Contract(format!(
            "observation {}x{} does not match camera {}x{}",
            req.observation.width, req.observation.height, wc.camera.width, wc.camera.height
        )));
    }
    // The center travels as f32; clamping normalizes its quaternion the same
    // way on every executor.
    let center = clamp_pose_to_limits(&req.center, &wc.geometry)?;
    let bbox = bounding_box(&center, &wc.geometry, &wc.camera, &wc.objective)?;
    let objective = DepthObjective {
        d_obs: &req.observation,
        bbox,
        cfg: &wc.objective,
        geometry: &wc.geometry,
        camera: &wc.camera,
    };
    let mut ctx = PsoContext::new(&wc.pso, &wc.geometry, &objective).with_extent_scale(extent_scale);
    ctx.seed = req.seed;

    let (state, last_phase) = match req.kind {
        TaskKind::FusedFrame => {
            let mut state = init_swarm(&center, req.frame_index, &ctx);
            while state.phase_index < PHASES as u8 {
                run_phase(&mut state, &ctx)?;
            }
            (state, (PHASES - 1) as u8)
        }
        TaskKind::Phase => {
            if req.phase_index >= PHASES as u8 {
                return Err(Error::Contract(format!(
                    "phase index {} out of range",
                    req.phase_index
                )));
            }
            let mut state = match (&req.swarm_state, req.phase_index) {
                (None, 0) => init_swarm(&center, req.frame_index, &ctx),
                (Some(s), p) if p > 0 => s.clone(),
                _ => {
                    return Err(Error::Contract(
                        "phase > 0 requires swarm state, phase 0 forbids it".into(),
                    ))
                }
            };
            if state.phase_index != req.phase_index {
                return Err(Error::Contract(format!(
                    "state is at phase {}, request asks for phase {}",
                    state.phase_index, req.phase_index
                )));
            }
            run_phase(&mut state, &ctx)?;
            (state, req.phase_index)
        }
    };

    Ok(StepResult {
        frame_index: req.frame_index,
        phase_index: last_phase,
        gbest_pose: state.gbest_pose(),
        gbest_score: state.gbest_score,
        swarm_state: if last_phase < (PHASES - 1) as u8 {
            Some(state)
        } else {
            None
        },
        server_exec_us: 0, // stamped by the executor that timed the run
    })
}

/// No widening: the scale used by the socket server and by fresh sessions.
pub const UNIT_SCALE: [f64; POSE_DIMS] = [1.0; POSE_DIMS];
