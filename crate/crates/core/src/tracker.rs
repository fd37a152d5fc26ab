//! The serial per-frame tracking loop: each frame's optimization is centered
//! on the previous frame's solution, so nothing pipelines. When a loop
//! overruns the frame period, arriving frames are dropped and the next
//! initialization searches a wider region.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    fingertip_positions, DepthMap, HandGeometry, PoseVector, FINGER_COUNT, POSE_DIMS,
};
use crate::offload::Dispatcher;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameClock {
    pub source_fps: f64,
}

impl Default for FrameClock {
    fn default() -> Self {
        FrameClock { source_fps: 30.0 }
    }
}

impl FrameClock {
    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.source_fps
    }
}

/// Loop/period ratios within this fraction of an integer count as that
/// integer: a 66.7 ms loop at a 33.33 ms period is "two periods", not three.
const PERIOD_SNAP: f64 = 0.01;

/// Frames dropped after a loop of `loop_time_ms`: the count of frame slots
/// the loop spilled into beyond its own, `ceil(loop/period) - 1`, with the
/// ratio snapped to the nearest integer when within 1% of one.
pub fn frames_to_skip(loop_time_ms: f64, frame_period_ms: f64) -> u32 {
    let ratio = loop_time_ms / frame_period_ms;
    let nearest = ratio.round();
    let slots = if (ratio - nearest).abs() <= PERIOD_SNAP {
        nearest
    } else {
        ratio.ceil()
    };
    (slots as i64 - 1).max(0) as u32
}

/// Initialization widening after `skipped` dropped frames: translational and
/// articulation extents grow linearly (`1 + skipped * growth`, capped), while
/// quaternion extents stay put.
pub fn search_extent_scale(skipped: u32, growth: f64, cap: f64) -> [f64; POSE_DIMS] {
    let m = (1.0 + skipped as f64 * growth).min(cap);
    let mut scale = [m; POSE_DIMS];
    for s in scale.iter_mut().take(7).skip(3) {
        *s = 1.0;
    }
    scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub clock: FrameClock,
    pub extent_growth: f64,
    pub extent_cap: f64,
    /// Track loss is flagged after this many consecutive frames whose best
    /// score exceeds `loss_score_fraction * T`.
    pub loss_score_fraction: f64,
    pub loss_consecutive: u32,
    /// Overrides the computed skip count on every frame (starvation studies).
    pub force_skip: Option<u32>,
    /// Leading consumed frames excluded from the steady-state rate.
    pub warmup_frames: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            clock: FrameClock::default(),
            extent_growth: 0.5,
            extent_cap: 4.0,
            loss_score_fraction: 0.8,
            loss_consecutive: 5,
            force_skip: None,
            warmup_frames: 5,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clock.source_fps <= 0.0 {
            return Err(Error::Config("source_fps must be positive".into()));
        }
        if self.extent_growth < 0.0 || self.extent_cap < 1.0 {
            return Err(Error::Config("extent growth/cap out of range".into()));
        }
        Ok(())
    }
}

/// Per-frame record; skipped frames keep their row with `consumed = false`.
#[derive(Debug, Clone, Serialize)]
pub struct FrameRow {
    pub frame_index: u32,
    pub consumed: bool,
    pub start_ms: f64,
    pub done_ms: f64,
    pub loop_ms: f64,
    pub score: f64,
    pub pose: Option<PoseVector>,
    pub fingertip_error_m: Option<f64>,
    pub parameter_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackRecord {
    pub rows: Vec<FrameRow>,
    pub consumed_frames: u32,
    pub frames_skipped: u32,
    pub wall_time_ms: f64,
    /// consumed / wall time; never exceeds the source rate.
    pub achieved_fps: f64,
    pub mean_loop_ms: f64,
    /// Warm-up-excluded mean loop time and the rate it implies; this is the
    /// uncapped video-processing rate the offloading comparisons use.
    pub steady_mean_loop_ms: f64,
    pub processing_fps: f64,
    pub mean_parameter_error: Option<f64>,
    pub mean_fingertip_error_m: Option<f64>,
    pub track_loss: bool,
}

fn pose_errors(
    estimate: &PoseVector,
    truth: &PoseVector,
    g: &HandGeometry,
) -> Result<(f64, f64)> {
    // quaternions are sign-ambiguous; align before differencing
    let mut t = *truth;
    let dot: f64 = estimate
        .orientation
        .iter()
        .zip(t.orientation.iter())
        .map(|(a, b)| a * b)
        .sum();
    if dot < 0.0 {
        for q in t.orientation.iter_mut() {
            *q = -*q;
        }
    }
    let ea = estimate.to_array();
    let ta = t.to_array();
    let param = ea
        .iter()
        .zip(ta.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / POSE_DIMS as f64;

    let tips_e = fingertip_positions(estimate, g)?;
    let tips_t = fingertip_positions(&t, g)?;
    let mut tip = 0.0;
    for f in 0..FINGER_COUNT {
        let d: f64 = (0..3)
            .map(|i| (tips_e[f][i] - tips_t[f][i]).powi(2))
            .sum::<f64>()
            .sqrt();
        tip += d;
    }
    Ok((param, tip / FINGER_COUNT as f64))
}

/// Tracks an ordered depth sequence starting from `h0`, strictly serially.
///
/// Observations are re-snapped to the millimeter wire grid at intake
/// (quantize-then-track), so the numbers every executor sees are the numbers
/// that travel. Per-frame loop times come from the dispatcher (modeled under
/// a virtual clock, measured under a wall clock); skips follow
/// [`frames_to_skip`] unless `force_skip` pins them.
pub fn track_sequence(
    frames: &[DepthMap],
    h0: &PoseVector,
    dispatcher: &mut Dispatcher,
    cfg: &TrackerConfig,
    ground_truth: Option<&[PoseVector]>,
) -> Result<TrackRecord> {
    dispatcher.validate()?;
    cfg.validate()?;
    if let Some(gt) = ground_truth {
        if gt.len() != frames.len() {
            return Err(Error::Contract(format!(
                "{} ground-truth poses for {} frames",
                gt.len(),
                frames.len()
            )));
        }
    }
    let period = cfg.clock.frame_period_ms();
    let geometry = dispatcher.worker().geometry.clone();
    let loss_threshold = cfg.loss_score_fraction * dispatcher.clamp_threshold_m();

    let mut rows: Vec<Option<FrameRow>> = vec![None; frames.len()];
    let mut pose = *h0;
    let mut skipped_before = 0u32;
    let mut timeline_ms = 0.0;
    let mut lossy_streak = 0u32;
    let mut track_loss = false;
    let mut index = 0usize;

    while index < frames.len() {
        let scale = search_extent_scale(skipped_before, cfg.extent_growth, cfg.extent_cap);
        let observation = frames[index].quantize();
        let outcome =
            dispatcher.optimize_frame(index as u32, &pose, &observation, &scale)?;
        pose = outcome.pose;

        let (param_err, tip_err) = match ground_truth {
            Some(gt) => {
                let (p, t) = pose_errors(&pose, &gt[index], &geometry)?;
                (Some(p), Some(t))
            }
            None => (None, None),
        };

        if outcome.score > loss_threshold {
            lossy_streak += 1;
            if lossy_streak >= cfg.loss_consecutive {
                track_loss = true;
            }
        } else {
            lossy_streak = 0;
        }

        rows[index] = Some(FrameRow {
            frame_index: index as u32,
            consumed: true,
            start_ms: timeline_ms,
            done_ms: timeline_ms + outcome.loop_ms,
            loop_ms: outcome.loop_ms,
            score: outcome.score,
            pose: Some(pose),
            fingertip_error_m: tip_err,
            parameter_error: param_err,
        });

        // drop-oldest pacing: a slow loop keeps grabbing the freshest frame
        // back to back, a fast loop waits out the source period
        timeline_ms += outcome.loop_ms.max(period);
        let skip = cfg
            .force_skip
            .unwrap_or_else(|| frames_to_skip(outcome.loop_ms, period));
        skipped_before = skip;
        index += 1 + skip as usize;
    }

    let rows: Vec<FrameRow> = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.unwrap_or(FrameRow {
                frame_index: i as u32,
                consumed: false,
                start_ms: 0.0,
                done_ms: 0.0,
                loop_ms: 0.0,
                score: 0.0,
                pose: None,
                fingertip_error_m: None,
                parameter_error: None,
            })
        })
        .collect();

    let consumed: Vec<&FrameRow> = rows.iter().filter(|r| r.consumed).collect();
    let consumed_frames = consumed.len() as u32;
    let wall_time_ms: f64 = consumed.iter().map(|r| r.loop_ms.max(period)).sum();
    let mean_loop_ms =
        consumed.iter().map(|r| r.loop_ms).sum::<f64>() / consumed_frames.max(1) as f64;
    let steady: Vec<&&FrameRow> = consumed
        .iter()
        .skip(cfg.warmup_frames as usize)
        .collect();
    let steady_mean_loop_ms = if steady.is_empty() {
        mean_loop_ms
    } else {
        steady.iter().map(|r| r.loop_ms).sum::<f64>() / steady.len() as f64
    };
    let mean_over = |get: fn(&FrameRow) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = consumed.iter().filter_map(|r| get(r)).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };

    Ok(TrackRecord {
        consumed_frames,
        frames_skipped: rows.len() as u32 - consumed_frames,
        achieved_fps: if wall_time_ms > 0.0 {
            1000.0 * consumed_frames as f64 / wall_time_ms
        } else {
            0.0
        },
        wall_time_ms,
        mean_loop_ms,
        steady_mean_loop_ms,
        processing_fps: if steady_mean_loop_ms > 0.0 {
            1000.0 / steady_mean_loop_ms
        } else {
            0.0
        },
        mean_parameter_error: mean_over(|r| r.parameter_error),
        mean_fingertip_error_m: mean_over(|r| r.fingertip_error_m),
        track_loss,
        rows,
    })
}

/// One CSV row per frame; pose parameters in the shortest round-trip decimal
/// form, so identical runs produce byte-identical files.
pub fn write_csv(record: &TrackRecord, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "frame,consumed,start_ms,done_ms,loop_ms,score,fingertip_error_m,parameter_error")?;
    for i in 0..POSE_DIMS {
        write!(out, ",p{i:02}")?;
    }
    writeln!(out)?;
    for r in &record.rows {
        write!(out, "{},{}", r.frame_index, u8::from(r.consumed))?;
        if r.consumed {
            write!(
                out,
                ",{},{},{},{}",
                r.start_ms, r.done_ms, r.loop_ms, r.score
            )?;
            match r.fingertip_error_m {
                Some(e) => write!(out, ",{e}")?,
                None => write!(out, ",")?,
            }
            match r.parameter_error {
                Some(e) => write!(out, ",{e}")?,
                None => write!(out, ",")?,
            }
            for v in r.pose.as_ref().unwrap().to_array() {
                write!(out, ",{v}")?;
            }
        } else {
            write!(out, ",,,,,,")?;
            for _ in 0..POSE_DIMS {
                write!(out, ",")?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Aggregate summary without the per-frame rows.
pub fn write_summary_json(record: &TrackRecord, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Summary<'a> {
        consumed_frames: u32,
        frames_skipped: u32,
        wall_time_ms: f64,
        achieved_fps: f64,
        mean_loop_ms: f64,
        steady_mean_loop_ms: f64,
        processing_fps: f64,
        mean_parameter_error: &'a Option<f64>,
        mean_fingertip_error_m: &'a Option<f64>,
        track_loss: bool,
    }
    let summary = Summary {
        consumed_frames: record.consumed_frames,
        frames_skipped: record.frames_skipped,
        wall_time_ms: record.wall_time_ms,
        achieved_fps: record.achieved_fps,
        mean_loop_ms: record.mean_loop_ms,
        steady_mean_loop_ms: record.steady_mean_loop_ms,
        processing_fps: record.processing_fps,
        mean_parameter_error: &record.mean_parameter_error,
        mean_fingertip_error_m: &record.mean_fingertip_error_m,
        track_loss: record.track_loss,
    };
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Task(format!("summary serialization: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
