//! Synthetic depth sequences (the stand-in for a pre-recorded video), the
//! scenario matrix runner, and report emission. Matrix runs default to the
//! virtual clock: loop times come from the exec-time models and the simulated
//! links, so every number in a report is reproducible bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, normalize_quaternion, render_depth, CameraIntrinsics, DepthMap,
    HandGeometry, PoseVector, FINGER_COUNT,
};
use crate::offload::{
    ClockMode, Counters, Dispatcher, ExecModel, Granularity, PolicyConfig, PolicyMode, SimRemote,
};
use crate::rng::CounterRng;
use crate::tracker::{track_sequence, write_csv, TrackRecord, TrackerConfig};
use crate::transport::{NetworkProfile, SimChannel, TcpRemote};
use crate::worker::WorkerContext;

/// How a matrix run executes: the default virtual clock with simulated
/// links, or wall time against a real server for networked scenarios.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub wall_clock: bool,
    pub remote_addr: Option<String>,
}

/// Parametric ground-truth motion: sinusoidal translation, a rocking
/// rotation, and staggered finger flexion waves, plus seeded depth noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSpec {
    pub frame_count: u32,
    pub base_position: [f64; 3],
    pub translation_amplitude_m: [f64; 3],
    pub translation_freq_hz: [f64; 3],
    pub rotation_axis: [f64; 3],
    pub rotation_amplitude_rad: f64,
    pub rotation_freq_hz: f64,
    pub flexion_center_rad: f64,
    pub flexion_amplitude_rad: f64,
    pub flexion_freq_hz: f64,
    pub abduction_amplitude_rad: f64,
    pub noise_sigma_m: f64,
    pub seed: u64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            frame_count: 300,
            base_position: [0.0, 0.0, 0.40],
            translation_amplitude_m: [0.035, 0.025, 0.02],
            translation_freq_hz: [0.21, 0.17, 0.13],
            rotation_axis: [0.2, 1.0, 0.3],
            rotation_amplitude_rad: 0.45,
            rotation_freq_hz: 0.15,
            flexion_center_rad: 0.55,
            flexion_amplitude_rad: 0.35,
            flexion_freq_hz: 0.27,
            abduction_amplitude_rad: 0.12,
            noise_sigma_m: 0.002,
            seed: 9,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::Config("frame_count must be positive".into()));
        }
        if self.noise_sigma_m < 0.0 {
            return Err(Error::Config("noise sigma must be nonnegative".into()));
        }
        let z_min = self.base_position[2] - self.translation_amplitude_m[2];
        if z_min <= 0.05 {
            return Err(Error::Config(
                "trajectory dips too close to the camera".into(),
            ));
        }
        Ok(())
    }

    /// Ground-truth pose at frame `t` of a sequence sampled at `fps`.
    pub fn pose_at(&self, frame: u32, fps: f64, g: &HandGeometry) -> PoseVector {
        use std::f64::consts::TAU;
        let t = frame as f64 / fps;
        let mut h = PoseVector::identity();
        for d in 0..3 {
            h.position[d] = self.base_position[d]
                + self.translation_amplitude_m[d]
                    * (TAU * self.translation_freq_hz[d] * t + d as f64).sin();
        }
        let angle = self.rotation_amplitude_rad * (TAU * self.rotation_freq_hz * t).sin();
        let axis_norm = self
            .rotation_axis
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(1e-12);
        let (s, c) = ((angle / 2.0).sin(), (angle / 2.0).cos());
        h.orientation = normalize_quaternion([
            c,
            s * self.rotation_axis[0] / axis_norm,
            s * self.rotation_axis[1] / axis_norm,
            s * self.rotation_axis[2] / axis_norm,
        ])
        .expect("axis-angle quaternion is unit");
        for f in 0..FINGER_COUNT {
            let phase = 0.7 * f as f64;
            let flex = self.flexion_center_rad
                + self.flexion_amplitude_rad * (TAU * self.flexion_freq_hz * t + phase).sin();
            let abduct =
                self.abduction_amplitude_rad * (TAU * self.flexion_freq_hz * t + phase + 1.3).sin();
            h.articulation[f * 4] = flex;
            h.articulation[f * 4 + 1] = abduct;
            h.articulation[f * 4 + 2] = 0.8 * flex;
            h.articulation[f * 4 + 3] = 0.5 * flex;
        }
        crate::kinematics::clamp_pose_to_limits(&h, g).expect("trajectory quaternion is unit")
    }
}

/// Renders the ground-truth trajectory and adds seeded Gaussian noise to the
/// nonzero pixels, re-snapped to the millimeter grid so frames survive the
/// wire and the sequence files bit-exactly.
pub fn generate_sequence(
    spec: &SequenceSpec,
    g: &HandGeometry,
    k: &CameraIntrinsics,
    fps: f64,
) -> Result<(Vec<DepthMap>, Vec<PoseVector>)> {
    spec.validate()?;
    let mut frames = Vec::with_capacity(spec.frame_count as usize);
    let mut poses = Vec::with_capacity(spec.frame_count as usize);
    for t in 0..spec.frame_count {
        let pose = spec.pose_at(t, fps, g);
        let mut map = render_depth(&forward_kinematics(&pose, g)?, k);
        if spec.noise_sigma_m > 0.0 {
            let mut rng = CounterRng::new(spec.seed, (t as u64) << 32);
            for s in map.samples.iter_mut() {
                if *s > 0.0 {
                    let noisy = (*s + spec.noise_sigma_m * rng.next_normal()).max(0.001);
                    *s = crate::kinematics::quantize_depth_m(noisy);
                }
            }
        }
        frames.push(map);
        poses.push(pose);
    }
    Ok((frames, poses))
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub granularity: Granularity,
    pub policy: PolicyMode,
    /// Simulated link profile name; None means no remote at all.
    #[serde(default)]
    pub network: Option<String>,
    /// Executor roles looked up in the exec-time model table.
    pub local_role: String,
    #[serde(default)]
    pub remote_role: Option<String>,
}

impl ScenarioConfig {
    pub fn validate(&self, models: &BTreeMap<String, f64>) -> Result<()> {
        if self.policy == PolicyMode::Forced && self.network.is_none() {
            return Err(Error::Config(format!(
                "scenario '{}': forced policy requires a network",
                self.name
            )));
        }
        if self.network.is_some() && self.remote_role.is_none() {
            return Err(Error::Config(format!(
                "scenario '{}': a network needs a remote role",
                self.name
            )));
        }
        if !models.contains_key(&self.local_role) {
            return Err(Error::Config(format!(
                "scenario '{}': unknown local role '{}'",
                self.name, self.local_role
            )));
        }
        if let Some(role) = &self.remote_role {
            if !models.contains_key(role) {
                return Err(Error::Config(format!(
                    "scenario '{}': unknown remote role '{role}'",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// The whole matrix: sequence spec, scenarios, exec-time models, profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixConfig {
    pub sequence: SequenceSpec,
    pub scenarios: Vec<ScenarioConfig>,
    /// Role name -> simulated milliseconds per optimization phase.
    pub exec_models: BTreeMap<String, f64>,
    pub dispatch_overhead_ms: f64,
    /// Custom link profiles usable by name in scenarios.
    pub profiles: Vec<NetworkProfile>,
}

pub fn default_exec_models() -> BTreeMap<String, f64> {
    // simulation parameters mirroring a fast server and a slow laptop,
    // not measurements
    BTreeMap::from([("server".to_string(), 6.0), ("laptop".to_string(), 19.0)])
}

fn granularity_tag(g: Granularity) -> &'static str {
    match g {
        Granularity::SingleStep => "single",
        Granularity::MultiStep => "multi",
    }
}

impl Default for MatrixConfig {
    fn default() -> Self {
        // Local baselines per host and per wrapping granularity, then the
        // full offloading cross of policy x granularity x link.
        let mut scenarios = Vec::new();
        for role in ["laptop", "server"] {
            for granularity in [Granularity::SingleStep, Granularity::MultiStep] {
                scenarios.push(ScenarioConfig {
                    name: format!("local-{role}-{}", granularity_tag(granularity)),
                    granularity,
                    policy: PolicyMode::LocalOnly,
                    network: None,
                    local_role: role.into(),
                    remote_role: None,
                });
            }
        }
        for policy in [PolicyMode::Forced, PolicyMode::Auto] {
            for granularity in [Granularity::SingleStep, Granularity::MultiStep] {
                for network in ["ethernet", "wifi"] {
                    let pol = match policy {
                        PolicyMode::Forced => "forced",
                        PolicyMode::Auto => "auto",
                        PolicyMode::LocalOnly => unreachable!(),
                    };
                    scenarios.push(ScenarioConfig {
                        name: format!("{pol}-{}-{network}", granularity_tag(granularity)),
                        granularity,
                        policy,
                        network: Some(network.into()),
                        local_role: "laptop".into(),
                        remote_role: Some("server".into()),
                    });
                }
            }
        }
        MatrixConfig {
            sequence: SequenceSpec::default(),
            scenarios,
            exec_models: default_exec_models(),
            dispatch_overhead_ms: 0.1,
            profiles: Vec::new(),
        }
    }
}

impl MatrixConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: MatrixConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sequence.validate()?;
        for p in &self.profiles {
            p.validate()?;
        }
        for s in &self.scenarios {
            s.validate(&self.exec_models)?;
            if let Some(name) = &s.network {
                self.resolve_profile(name)?;
            }
        }
        Ok(())
    }

    pub fn resolve_profile(&self, name: &str) -> Result<NetworkProfile> {
        if let Some(p) = self.profiles.iter().find(|p| p.name == name) {
            return Ok(p.clone());
        }
        NetworkProfile::by_name(name)
    }
}

/// Per-scenario aggregates, recomputable from the per-frame CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub granularity: Granularity,
    pub policy: PolicyMode,
    pub network: Option<String>,
    pub achieved_fps: f64,
    pub processing_fps: f64,
    pub mean_loop_ms: f64,
    pub steady_mean_loop_ms: f64,
    pub frames_consumed: u32,
    pub frames_skipped: u32,
    pub round_trips: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub remote_failures: u64,
    pub mean_fingertip_error_m: Option<f64>,
    pub mean_parameter_error: Option<f64>,
    pub track_loss: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub frame_count: u32,
    pub source_fps: f64,
    pub scenarios: Vec<ScenarioReport>,
}

impl Report {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// Runs one scenario over a generated sequence.
pub fn run_scenario(
    scenario: &ScenarioConfig,
    matrix: &MatrixConfig,
    worker: &WorkerContext,
    tracker_cfg: &TrackerConfig,
    frames: &[DepthMap],
    truth: &[PoseVector],
    opts: &RunOptions,
) -> Result<(ScenarioReport, TrackRecord, Counters)> {
    let exec_model = ExecModel {
        local_ms_per_phase: matrix.exec_models[&scenario.local_role],
        remote_ms_per_phase: scenario
            .remote_role
            .as_ref()
            .map(|r| matrix.exec_models[r])
            .unwrap_or(0.0),
        dispatch_overhead_ms: matrix.dispatch_overhead_ms,
    };
    let policy = PolicyConfig {
        mode: scenario.policy,
        ..PolicyConfig::default()
    };
    let clock = if opts.wall_clock {
        ClockMode::Wall
    } else {
        ClockMode::Virtual
    };
    let mut dispatcher = Dispatcher::new(worker.clone(), policy, scenario.granularity, clock)
        .with_exec_model(exec_model);
    if let Some(network) = &scenario.network {
        if opts.wall_clock {
            let addr = opts.remote_addr.as_deref().ok_or_else(|| {
                Error::Config(format!(
                    "scenario '{}': wall-clock networked runs need a remote server address",
                    scenario.name
                ))
            })?;
            dispatcher =
                dispatcher.with_remote(Box::new(TcpRemote::connect(addr, worker, policy.timeout_ms)?));
        } else {
            let profile = matrix.resolve_profile(network)?;
            dispatcher = dispatcher
                .with_remote(Box::new(SimRemote::new(
                    worker.clone(),
                    exec_model.remote_ms_per_phase,
                )))
                .with_virtual_link(SimChannel::new(profile));
        }
    }

    let record = track_sequence(frames, &truth[0], &mut dispatcher, tracker_cfg, Some(truth))?;
    let counters = dispatcher.counters;
    let report = ScenarioReport {
        name: scenario.name.clone(),
        granularity: scenario.granularity,
        policy: scenario.policy,
        network: scenario.network.clone(),
        achieved_fps: record.achieved_fps,
        processing_fps: record.processing_fps,
        mean_loop_ms: record.mean_loop_ms,
        steady_mean_loop_ms: record.steady_mean_loop_ms,
        frames_consumed: record.consumed_frames,
        frames_skipped: record.frames_skipped,
        round_trips: counters.round_trips,
        bytes_sent: counters.bytes_sent,
        bytes_received: counters.bytes_received,
        remote_failures: counters.remote_failures,
        mean_fingertip_error_m: record.mean_fingertip_error_m,
        mean_parameter_error: record.mean_parameter_error,
        track_loss: record.track_loss,
    };
    Ok((report, record, counters))
}

/// Runs every scenario over one shared sequence.
pub fn run_matrix(
    matrix: &MatrixConfig,
    worker: &WorkerContext,
    tracker_cfg: &TrackerConfig,
    opts: &RunOptions,
) -> Result<(Report, Vec<TrackRecord>)> {
    matrix.validate()?;
    let (frames, truth) = generate_sequence(
        &matrix.sequence,
        &worker.geometry,
        &worker.camera,
        tracker_cfg.clock.source_fps,
    )?;
    let mut scenarios = Vec::new();
    let mut records = Vec::new();
    for scenario in &matrix.scenarios {
        let (report, record, _) =
            run_scenario(scenario, matrix, worker, tracker_cfg, &frames, &truth, opts)?;
        scenarios.push(report);
        records.push(record);
    }
    Ok((
        Report {
            frame_count: matrix.sequence.frame_count,
            source_fps: tracker_cfg.clock.source_fps,
            scenarios,
        },
        records,
    ))
}

/// Writes report.json, a plain-text comparison table, and one per-frame CSV
/// per scenario. Reruns on the same inputs produce byte-identical files.
pub fn emit_report(report: &Report, records: &[TrackRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Task(format!("report serialization: {e}")))?;
    std::fs::write(dir.join("report.json"), json + "\n")?;

    let mut table = String::new();
    table.push_str(&format!(
        "{:<22} {:>10} {:>12} {:>12} {:>9} {:>8} {:>12} {:>10}\n",
        "scenario", "policy", "proc_fps", "achieved_fps", "loop_ms", "skipped", "round_trips", "tip_err_mm"
    ));
    for s in &report.scenarios {
        let tip = s
            .mean_fingertip_error_m
            .map(|e| format!("{:.2}", e * 1000.0))
            .unwrap_or_else(|| "-".into());
        table.push_str(&format!(
            "{:<22} {:>10} {:>12.2} {:>12.2} {:>9.2} {:>8} {:>12} {:>10}\n",
            s.name,
            match s.policy {
                PolicyMode::Forced => "forced",
                PolicyMode::Auto => "auto",
                PolicyMode::LocalOnly => "local",
            },
            s.processing_fps,
            s.achieved_fps,
            s.steady_mean_loop_ms,
            s.frames_skipped,
            s.round_trips,
            tip
        ));
    }
    std::fs::write(dir.join("table.txt"), table)?;

    for (s, record) in report.scenarios.iter().zip(records) {
        write_csv(record, &dir.join(format!("{}.csv", s.name)))?;
    }
    Ok(())
}

/// Writes one frame per file in the exact wire depth-block layout plus a
/// ground-truth JSON; the storage format is the transport format.
pub fn write_sequence(
    dir: &Path,
    frames: &[DepthMap],
    poses: &[PoseVector],
    spec: &SequenceSpec,
    fps: f64,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, frame) in frames.iter().enumerate() {
        let mut bytes = Vec::with_capacity(4 + frame.samples.len() * 2);
        bytes.extend_from_slice(&(frame.width as u16).to_be_bytes());
        bytes.extend_from_slice(&(frame.height as u16).to_be_bytes());
        for &s in &frame.samples {
            bytes.extend_from_slice(&crate::kinematics::quantize_depth_mm(s).to_be_bytes());
        }
        std::fs::write(dir.join(format!("frame_{i:06}.depth")), bytes)?;
    }
    #[derive(Serialize)]
    struct GroundTruth<'a> {
        fps: f64,
        spec: &'a SequenceSpec,
        poses: &'a [PoseVector],
    }
    let gt = GroundTruth { fps, spec, poses };
    let text = serde_json::to_string_pretty(&gt)
        .map_err(|e| Error::Task(format!("ground-truth serialization: {e}")))?;
    std::fs::write(dir.join("ground_truth.json"), text + "\n")?;
    Ok(())
}

/// Loads a stored sequence; ground truth is optional (real recordings).
pub fn read_sequence(dir: &Path) -> Result<(Vec<DepthMap>, Option<Vec<PoseVector>>, f64)> {
    let mut frames = Vec::new();
    for i in 0.. {
        let path = dir.join(format!("frame_{i:06}.depth"));
        if !path.exists() {
            break;
        }
        let bytes = std::fs::read(&path)?;
        if bytes.len() < 4 {
            return Err(Error::Protocol(format!("{}: truncated", path.display())));
        }
        let width = u16::from_be_bytes([bytes[0], bytes[1]]) as u32;
        let height = u16::from_be_bytes([bytes[2], bytes[3]]) as u32;
        let expect = 4 + (width * height) as usize * 2;
        if bytes.len() != expect {
            return Err(Error::Protocol(format!(
                "{}: {} bytes, expected {expect}",
                path.display(),
                bytes.len()
            )));
        }
        let samples = bytes[4..]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 1000.0)
            .collect();
        frames.push(DepthMap {
            width,
            height,
            samples,
        });
    }
    if frames.is_empty() {
        return Err(Error::Config(format!(
            "no frame_*.depth files in {}",
            dir.display()
        )));
    }
    let gt_path = dir.join("ground_truth.json");
    if gt_path.exists() {
        #[derive(Deserialize)]
        struct GroundTruth {
            fps: f64,
            #[allow(dead_code)]
            #[serde(default)]
            spec: Option<SequenceSpec>,
            poses: Vec<PoseVector>,
        }
        let text = std::fs::read_to_string(&gt_path)?;
        let gt: GroundTruth = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", gt_path.display())))?;
        if gt.poses.len() != frames.len() {
            return Err(Error::Config(format!(
                "{} poses for {} frames",
                gt.poses.len(),
                frames.len()
            )));
        }
        Ok((frames, Some(gt.poses), gt.fps))
    } else {
        Ok((frames, None, 30.0))
    }
}
