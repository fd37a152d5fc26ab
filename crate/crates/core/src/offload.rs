//! Method-level task dispatch: an executor registry (local worker plus an
//! optional remote), Forced/Auto/LocalOnly policies, single- vs multi-step
//! granularity, EWMA completion-time estimation, and local fallback on
//! remote failure. Policies change timing only, never results.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{clamp_pose_to_limits, DepthMap, PoseVector, POSE_DIMS};
use crate::pso::SwarmState;
use crate::transport::{
    decode, encode, step_request_payload_size, step_result_payload_size, Message, SimChannel,
    StepRequest, StepResult, TaskKind, TcpRemote, CALIBRATION_SLOT,
};
use crate::worker::{execute_step, WorkerContext, UNIT_SCALE};

/// Offloading granularity: the whole frame fused into one task, or the four
/// optimization phases as four tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    SingleStep,
    MultiStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Always offload (a client with no usable local compute).
    Forced,
    /// Argmin of predicted completion time, local on ties.
    Auto,
    /// Never offload.
    LocalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    pub ewma_alpha: f64,
    /// Whole-completion priors used only until calibration seeds estimates.
    pub initial_local_ms: f64,
    pub initial_remote_ms: f64,
    pub timeout_ms: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            mode: PolicyMode::LocalOnly,
            ewma_alpha: 0.3,
            initial_local_ms: 50.0,
            initial_remote_ms: 50.0,
            timeout_ms: 2000,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err(Error::Config("ewma_alpha must be in (0, 1]".into()));
        }
        if self.initial_local_ms <= 0.0 || self.initial_remote_ms <= 0.0 {
            return Err(Error::Config("latency priors must be positive".into()));
        }
        Ok(())
    }
}

/// What the decision function sees of a task.
#[derive(Debug, Clone, Copy)]
pub struct TaskDescriptor {
    pub kind: TaskKind,
    /// Encoded request payload size in bytes.
    pub payload_bytes: usize,
    pub frame_index: u32,
    pub phase_index: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutorChoice {
    Local,
    Remote,
}

fn kind_idx(kind: TaskKind) -> usize {
    match kind {
        TaskKind::FusedFrame => 0,
        TaskKind::Phase => 1,
    }
}

/// EWMA state per (executor, task kind) plus link round-trip and bandwidth.
#[derive(Debug, Clone)]
pub struct LatencyEstimator {
    alpha: f64,
    local_exec_ms: [Option<f64>; 2],
    remote_exec_ms: [Option<f64>; 2],
    rtt_ms: Option<f64>,
    bandwidth_bytes_per_ms: Option<f64>,
}

impl LatencyEstimator {
    pub fn new(alpha: f64) -> Self {
        LatencyEstimator {
            alpha,
            local_exec_ms: [None; 2],
            remote_exec_ms: [None; 2],
            rtt_ms: None,
            bandwidth_bytes_per_ms: None,
        }
    }

    fn ewma(&self, slot: &mut Option<f64>, obs: f64) {
        *slot = Some(match *slot {
            Some(prev) => self.alpha * obs + (1.0 - self.alpha) * prev,
            None => obs,
        });
    }

    pub fn observe_local_exec(&mut self, kind: TaskKind, ms: f64) {
        let mut slot = self.local_exec_ms[kind_idx(kind)];
        self.ewma(&mut slot, ms);
        self.local_exec_ms[kind_idx(kind)] = slot;
    }

    pub fn observe_remote_exec(&mut self, kind: TaskKind, ms: f64) {
        let mut slot = self.remote_exec_ms[kind_idx(kind)];
        self.ewma(&mut slot, ms);
        self.remote_exec_ms[kind_idx(kind)] = slot;
    }

    pub fn observe_rtt(&mut self, ms: f64) {
        let mut slot = self.rtt_ms;
        self.ewma(&mut slot, ms.max(1e-6));
        self.rtt_ms = slot;
    }

    pub fn observe_bandwidth(&mut self, bytes_per_ms: f64) {
        if bytes_per_ms > 0.0 {
            let mut slot = self.bandwidth_bytes_per_ms;
            self.ewma(&mut slot, bytes_per_ms);
            self.bandwidth_bytes_per_ms = slot;
        }
    }

    /// Force-seed every component (tests and priors).
    pub fn seed(
        &mut self,
        local_ms: [Option<f64>; 2],
        remote_ms: [Option<f64>; 2],
        rtt_ms: Option<f64>,
        bandwidth: Option<f64>,
    ) {
        self.local_exec_ms = local_ms;
        self.remote_exec_ms = remote_ms;
        self.rtt_ms = rtt_ms;
        self.bandwidth_bytes_per_ms = bandwidth;
    }

    pub fn predicted_local_ms(&self, kind: TaskKind, policy: &PolicyConfig) -> f64 {
        self.local_exec_ms[kind_idx(kind)].unwrap_or(policy.initial_local_ms)
    }

    /// exec + rtt + (request + response bytes) / bandwidth; falls back to the
    /// whole-completion prior while any component is unseeded.
    pub fn predicted_remote_ms(
        &self,
        kind: TaskKind,
        total_bytes: usize,
        policy: &PolicyConfig,
    ) -> f64 {
        match (
            self.remote_exec_ms[kind_idx(kind)],
            self.rtt_ms,
            self.bandwidth_bytes_per_ms,
        ) {
            (Some(exec), Some(rtt), Some(bw)) => exec + rtt + total_bytes as f64 / bw,
            _ => policy.initial_remote_ms,
        }
    }
}

/// Picks the executor for one task under the configured policy.
pub fn decide(
    task: &TaskDescriptor,
    expected_response_bytes: usize,
    policy: &PolicyConfig,
    estimator: &LatencyEstimator,
    has_remote: bool,
) -> Result<ExecutorChoice> {
    match policy.mode {
        PolicyMode::LocalOnly => Ok(ExecutorChoice::Local),
        PolicyMode::Forced => {
            if has_remote {
                Ok(ExecutorChoice::Remote)
            } else {
                Err(Error::Config(
                    "forced offload policy with no registered remote".into(),
                ))
            }
        }
        PolicyMode::Auto => {
            if !has_remote {
                return Ok(ExecutorChoice::Local);
            }
            let local = estimator.predicted_local_ms(task.kind, policy);
            let remote = estimator.predicted_remote_ms(
                task.kind,
                task.payload_bytes + expected_response_bytes,
                policy,
            );
            // strict inequality: ties stay local
            Ok(if remote < local {
                ExecutorChoice::Remote
            } else {
                ExecutorChoice::Local
            })
        }
    }
}

/// Timing and size bookkeeping from one remote exchange.
#[derive(Debug, Clone)]
pub struct RemoteExchange {
    pub result: StepResult,
    pub wall_ms: f64,
    pub request_bytes: usize,
    pub response_bytes: usize,
}

/// A remote executor the dispatcher can route tasks to.
pub trait RemoteEndpoint {
    /// Executes one task. `extent_scale` is honored only by in-process
    /// endpoints (the wire format cannot carry it); the dispatcher passes the
    /// unit scale to endpoints that return false from
    /// [`RemoteEndpoint::supports_extent_widening`].
    fn execute(&mut self, req: &StepRequest, extent_scale: &[f64; POSE_DIMS])
        -> Result<RemoteExchange>;

    fn ping_ms(&mut self) -> Result<f64>;

    fn supports_extent_widening(&self) -> bool;

    fn name(&self) -> &str;
}

impl RemoteEndpoint for TcpRemote {
    fn execute(
        &mut self,
        req: &StepRequest,
        _extent_scale: &[f64; POSE_DIMS],
    ) -> Result<RemoteExchange> {
        let (result, ex) = self.step(req.clone())?;
        Ok(RemoteExchange {
            result,
            wall_ms: ex.wall_ms,
            request_bytes: ex.request_bytes,
            response_bytes: ex.response_bytes,
        })
    }

    fn ping_ms(&mut self) -> Result<f64> {
        TcpRemote::ping_ms(self)
    }

    fn supports_extent_widening(&self) -> bool {
        false
    }

    fn name(&self) -> &str {
        "tcp"
    }
}

/// In-process stand-in for a remote executor: every request and result passes
/// through the real codec (so byte accounting and quantization match the
/// socket path exactly), but execution happens in this process.
pub struct SimRemote {
    worker: WorkerContext,
    exec_ms_per_phase: f64,
}

impl SimRemote {
    pub fn new(worker: WorkerContext, exec_ms_per_phase: f64) -> Self {
        SimRemote {
            worker,
            exec_ms_per_phase,
        }
    }
}

impl RemoteEndpoint for SimRemote {
    fn execute(
        &mut self,
        req: &StepRequest,
        extent_scale: &[f64; POSE_DIMS],
    ) -> Result<RemoteExchange> {
        let start = Instant::now();
        let frame = encode(&Message::StepRequest(Box::new(req.clone())));
        let request_bytes = frame.len();
        let decoded = match decode(&frame)? {
            Message::StepRequest(r) => *r,
            _ => unreachable!("request encodes to a request frame"),
        };
        let mut result = execute_step(&decoded, &self.worker, extent_scale)?;
        result.server_exec_us = (self.exec_ms_per_phase
            * WorkerContext::phases_in_task(req.kind) as f64
            * 1000.0)
            .round() as u32;
        let resp_frame = encode(&Message::StepResult(Box::new(result)));
        let response_bytes = resp_frame.len();
        let result = match decode(&resp_frame)? {
            Message::StepResult(r) => *r,
            _ => unreachable!("result encodes to a result frame"),
        };
        Ok(RemoteExchange {
            result,
            wall_ms: start.elapsed().as_secs_f64() * 1000.0,
            request_bytes,
            response_bytes,
        })
    }

    fn ping_ms(&mut self) -> Result<f64> {
        Ok(0.0)
    }

    fn supports_extent_widening(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "sim"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Task costs are measured wall time.
    Wall,
    /// Task costs come from the exec model and the modeled link; the real
    /// computation still runs, its wall time is ignored.
    Virtual,
}

/// Per-phase execution-time model by executor role, plus fixed per-task
/// dispatch overhead. Defaults mirror a fast server and a slow laptop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecModel {
    pub local_ms_per_phase: f64,
    pub remote_ms_per_phase: f64,
    pub dispatch_overhead_ms: f64,
}

impl Default for ExecModel {
    fn default() -> Self {
        ExecModel {
            local_ms_per_phase: 19.0,
            remote_ms_per_phase: 6.0,
            dispatch_overhead_ms: 0.1,
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize)]
pub struct Counters {
    pub round_trips: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub remote_failures: u64,
    pub tasks_local: u64,
    pub tasks_remote: u64,
    /// Session-setup time spent seeding the estimator; never part of any
    /// frame's loop time (warm-up is excluded from measurement).
    pub calibration_ms: f64,
}

/// Result of optimizing one frame through the dispatcher.
#[derive(Debug, Clone, Copy)]
pub struct FrameOutcome {
    pub pose: PoseVector,
    pub score: f64,
    pub loop_ms: f64,
}

/// One dispatcher per tracking session. Dispatch is synchronous: the serial
/// frame dependency means nothing useful can overlap.
pub struct Dispatcher {
    worker: WorkerContext,
    policy: PolicyConfig,
    granularity: Granularity,
    pub estimator: LatencyEstimator,
    remote: Option<Box<dyn RemoteEndpoint>>,
    clock: ClockMode,
    exec_model: ExecModel,
    link: Option<SimChannel>,
    pub counters: Counters,
    calibrated: bool,
}

impl Dispatcher {
    pub fn new(
        worker: WorkerContext,
        policy: PolicyConfig,
        granularity: Granularity,
        clock: ClockMode,
    ) -> Self {
        let estimator = LatencyEstimator::new(policy.ewma_alpha);
        Dispatcher {
            worker,
            policy,
            granularity,
            estimator,
            remote: None,
            clock,
            exec_model: ExecModel::default(),
            link: None,
            counters: Counters::default(),
            calibrated: false,
        }
    }

    pub fn with_remote(mut self, remote: Box<dyn RemoteEndpoint>) -> Self {
        self.remote = Some(remote);
        self
    }

    /// Modeled link for virtual-clock timing. Without one, modeled network
    /// delay is zero (the zero-delay loopback case).
    pub fn with_virtual_link(mut self, link: SimChannel) -> Self {
        self.link = Some(link);
        self
    }

    pub fn with_exec_model(mut self, model: ExecModel) -> Self {
        self.exec_model = model;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.policy.mode == PolicyMode::Forced && self.remote.is_none() {
            return Err(Error::Config(
                "forced offload policy with no registered remote".into(),
            ));
        }
        Ok(())
    }

    pub fn worker(&self) -> &WorkerContext {
        &self.worker
    }

    pub fn clamp_threshold_m(&self) -> f64 {
        self.worker.objective.clamp_threshold_m
    }

    /// Extent widening needs an in-process path to every executor; the wire
    /// format cannot carry the per-frame scale.
    pub fn supports_extent_widening(&self) -> bool {
        self.remote
            .as_ref()
            .is_none_or(|r| r.supports_extent_widening())
    }

    fn swarm_size(&self) -> usize {
        self.worker.pso.swarm_size as usize
    }

    fn expected_response_payload(&self, kind: TaskKind, phase_index: u8) -> usize {
        match kind {
            TaskKind::FusedFrame => step_result_payload_size(None),
            TaskKind::Phase => step_result_payload_size(if phase_index < 3 {
                Some(self.swarm_size())
            } else {
                None
            }),
        }
    }

    fn modeled_exec_ms(&self, kind: TaskKind, choice: ExecutorChoice) -> f64 {
        let per_phase = match choice {
            ExecutorChoice::Local => self.exec_model.local_ms_per_phase,
            ExecutorChoice::Remote => self.exec_model.remote_ms_per_phase,
        };
        per_phase * WorkerContext::phases_in_task(kind) as f64
    }

    fn link_delay_ms(&self, slot: u64, seq: &mut u16, bytes: usize) -> f64 {
        let d = match &self.link {
            Some(link) => link.delay_ms(slot, *seq, bytes),
            None => 0.0,
        };
        *seq = seq.wrapping_add(1);
        d
    }

    fn execute_local(
        &mut self,
        req: &StepRequest,
        scale: &[f64; POSE_DIMS],
    ) -> Result<(StepResult, f64)> {
        let start = Instant::now();
        let mut res = execute_step(req, &self.worker, scale)?;
        let measured_ms = start.elapsed().as_secs_f64() * 1000.0;
        res.server_exec_us = (measured_ms * 1000.0).min(u32::MAX as f64) as u32;
        let task_ms = match self.clock {
            ClockMode::Wall => measured_ms,
            ClockMode::Virtual => self.modeled_exec_ms(req.kind, ExecutorChoice::Local),
        };
        self.estimator.observe_local_exec(req.kind, task_ms);
        self.counters.tasks_local += 1;
        Ok((res, task_ms))
    }

    fn execute_remote(
        &mut self,
        req: &StepRequest,
        slot: u64,
        seq: &mut u16,
        scale: &[f64; POSE_DIMS],
    ) -> Result<(StepResult, f64)> {
        let remote = self
            .remote
            .as_mut()
            .ok_or_else(|| Error::Config("no remote executor registered".into()))?;
        let exchange = remote.execute(req, scale)?;
        self.counters.round_trips += 1;
        self.counters.bytes_sent += exchange.request_bytes as u64;
        self.counters.bytes_received += exchange.response_bytes as u64;
        self.counters.tasks_remote += 1;

        let task_ms = match self.clock {
            ClockMode::Wall => {
                let exec_ms = exchange.result.server_exec_us as f64 / 1000.0;
                self.estimator.observe_remote_exec(req.kind, exec_ms);
                if let Some(rtt) = self.estimator.rtt_ms {
                    let transfer = (exchange.wall_ms - exec_ms - rtt).max(1e-3);
                    self.estimator.observe_bandwidth(
                        (exchange.request_bytes + exchange.response_bytes) as f64 / transfer,
                    );
                }
                exchange.wall_ms
            }
            ClockMode::Virtual => {
                let d_req = self.link_delay_ms(slot, seq, exchange.request_bytes);
                let d_resp = self.link_delay_ms(slot, seq, exchange.response_bytes);
                let exec_ms = self.modeled_exec_ms(req.kind, ExecutorChoice::Remote);
                self.estimator.observe_remote_exec(req.kind, exec_ms);
                if let Some(link) = &self.link {
                    let bw = link.profile.bandwidth_bytes_per_ms;
                    let transfer =
                        (exchange.request_bytes + exchange.response_bytes) as f64 / bw;
                    self.estimator.observe_rtt((d_req + d_resp - transfer).max(1e-6));
                    self.estimator.observe_bandwidth(bw);
                } else {
                    self.estimator.observe_rtt(1e-6);
                }
                d_req + exec_ms + d_resp
            }
        };
        Ok((exchange.result, task_ms))
    }

    fn needs_calibration(&self) -> bool {
        self.policy.mode == PolicyMode::Auto && self.remote.is_some() && !self.calibrated
    }

    /// Auto-mode warm-up, run once per session before the first frame: ping
    /// the link, then run the session's first task on both executors to seed
    /// the estimator. The results are discarded (they are bit-identical by
    /// the executor-transparency contract) and the time is booked as
    /// session setup, not frame time.
    fn calibrate(&mut self, req: &StepRequest, scale: &[f64; POSE_DIMS]) -> Result<()> {
        let mut seq: u16 = 0;
        let mut total_ms = 0.0;

        let rtt = match self.clock {
            ClockMode::Wall => self
                .remote
                .as_mut()
                .expect("calibration requires a remote")
                .ping_ms()?,
            ClockMode::Virtual => {
                let ping_frame = encode(&Message::Ping).len();
                self.link_delay_ms(CALIBRATION_SLOT, &mut seq, ping_frame)
                    + self.link_delay_ms(CALIBRATION_SLOT, &mut seq, ping_frame)
            }
        };
        self.estimator.observe_rtt(rtt.max(1e-6));
        total_ms += rtt;

        let (remote_res, remote_ms) = self.execute_remote(req, CALIBRATION_SLOT, &mut seq, scale)?;
        total_ms += remote_ms;
        let (local_res, local_ms) = self.execute_local(req, scale)?;
        total_ms += local_ms;

        if remote_res.gbest_pose != local_res.gbest_pose
            || remote_res.gbest_score != local_res.gbest_score
        {
            warn!(
                "executor divergence during calibration (frame {}): local {:?} vs remote {:?}",
                req.frame_index, local_res.gbest_score, remote_res.gbest_score
            );
        }
        self.counters.calibration_ms += total_ms;
        self.calibrated = true;
        Ok(())
    }

    /// Routes one task per policy; on remote failure, re-executes locally
    /// (bounded worst case, no retry).
    fn dispatch_task(
        &mut self,
        req: &StepRequest,
        slot: u64,
        seq: &mut u16,
        scale: &[f64; POSE_DIMS],
    ) -> Result<(StepResult, f64)> {
        let desc = TaskDescriptor {
            kind: req.kind,
            payload_bytes: step_request_payload_size(
                req.observation.width as u16,
                req.observation.height as u16,
                req.swarm_state.as_ref().map(|s| s.positions.len()),
            ),
            frame_index: req.frame_index,
            phase_index: req.phase_index,
        };
        let expected_resp = self.expected_response_payload(req.kind, req.phase_index);
        let choice = decide(
            &desc,
            expected_resp,
            &self.policy,
            &self.estimator,
            self.remote.is_some(),
        )?;

        let (res, ms) = match choice {
            ExecutorChoice::Local => self.execute_local(req, scale)?,
            ExecutorChoice::Remote => {
                let attempt = Instant::now();
                match self.execute_remote(req, slot, seq, scale) {
                    Ok(ok) => ok,
                    Err(e) => {
                        warn!(
                            "remote task failed (frame {} phase {}): {e}; falling back to local",
                            req.frame_index, req.phase_index
                        );
                        self.counters.remote_failures += 1;
                        let penalty_ms = match self.clock {
                            ClockMode::Wall => attempt.elapsed().as_secs_f64() * 1000.0,
                            ClockMode::Virtual => self.policy.timeout_ms as f64,
                        };
                        let (res, local_ms) = self.execute_local(req, scale)?;
                        (res, penalty_ms + local_ms)
                    }
                }
            }
        };
        Ok((res, ms + self.exec_model.dispatch_overhead_ms))
    }

    /// Optimizes one frame: canonicalizes the center through the wire
    /// precision, then routes one fused task or four phase tasks. Returns the
    /// best pose, its score, and the accumulated loop time for this frame.
    pub fn optimize_frame(
        &mut self,
        frame_index: u32,
        center: &PoseVector,
        observation: &DepthMap,
        extent_scale: &[f64; POSE_DIMS],
    ) -> Result<FrameOutcome> {
        let scale = if self.supports_extent_widening() {
            *extent_scale
        } else {
            UNIT_SCALE
        };
        let center = clamp_pose_to_limits(&center.quantize_f32(), &self.worker.geometry)?;
        let seed = self.worker.pso.seed;
        let slot = frame_index as u64;
        let mut seq: u16 = 0;
        let mut loop_ms = 0.0;

        match self.granularity {
            Granularity::SingleStep => {
                let req = StepRequest {
                    frame_index,
                    kind: TaskKind::FusedFrame,
                    phase_index: 0,
                    seed,
                    center,
                    observation: observation.clone(),
                    swarm_state: None,
                };
                if self.needs_calibration() {
                    self.calibrate(&req, &scale)?;
                }
                let (res, ms) = self.dispatch_task(&req, slot, &mut seq, &scale)?;
                loop_ms += ms;
                Ok(FrameOutcome {
                    pose: res.gbest_pose,
                    score: res.gbest_score,
                    loop_ms,
                })
            }
            Granularity::MultiStep => {
                let mut state: Option<SwarmState> = None;
                let mut pose = center;
                let mut score = f64::INFINITY;
                for phase in 0..4u8 {
                    let req = StepRequest {
                        frame_index,
                        kind: TaskKind::Phase,
                        phase_index: phase,
                        seed,
                        center,
                        observation: observation.clone(),
                        swarm_state: state.take(),
                    };
                    if phase == 0 && self.needs_calibration() {
                        self.calibrate(&req, &scale)?;
                    }
                    let (res, ms) = self.dispatch_task(&req, slot, &mut seq, &scale)?;
                    loop_ms += ms;
                    state = res.swarm_state;
                    pose = res.gbest_pose;
                    score = res.gbest_score;
                }
                Ok(FrameOutcome {
                    pose,
                    score,
                    loop_ms,
                })
            }
        }
    }
}
