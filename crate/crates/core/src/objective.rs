//! Depth-discrepancy objective: the mean over a bounding box of clamped
//! absolute depth differences between a rendered hypothesis and the observed
//! depth map, with silhouette mismatches charged the full clamp value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, splat_into, CameraIntrinsics, DepthMap, HandGeometry, PoseVector,
};

/// Pixel-space rectangle, inclusive-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn pixel_count(&self) -> u64 {
        (self.x1 - self.x0) as u64 * (self.y1 - self.y0) as u64
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    /// Clamp threshold T in meters.
    pub clamp_threshold_m: f64,
    /// Bounding-box dilation in pixels.
    pub box_margin_px: u32,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            clamp_threshold_m: 0.30,
            box_margin_px: 16,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clamp_threshold_m <= 0.0 {
            return Err(Error::Config("clamp threshold must be positive".into()));
        }
        Ok(())
    }
}

/// C(x, T): x if x <= T, else T.
pub fn clamp(x: f64, t: f64) -> f64 {
    if x <= t {
        x
    } else {
        t
    }
}

/// Pixel-space AABB of the projected sphere set of `h`, dilated by the
/// configured margin and intersected with the image rectangle. All particles
/// of one frame share the box computed from the frame's center hypothesis,
/// so N_P is constant within a frame.
pub fn bounding_box(
    h: &PoseVector,
    g: &HandGeometry,
    k: &CameraIntrinsics,
    cfg: &ObjectiveConfig,
) -> Result<BoundingBox> {
    let set = forward_kinematics(h, g)?;
    let mut u_lo = f64::INFINITY;
    let mut u_hi = f64::NEG_INFINITY;
    let mut v_lo = f64::INFINITY;
    let mut v_hi = f64::NEG_INFINITY;
    for &(center, radius) in &set.spheres {
        let z = center[2];
        if z <= 0.0 {
            continue;
        }
        let u0 = k.fx * center[0] / z + k.cx;
        let v0 = k.fy * center[1] / z + k.cy;
        let ru = k.fx * radius / z;
        let rv = k.fy * radius / z;
        u_lo = u_lo.min(u0 - ru);
        u_hi = u_hi.max(u0 + ru);
        v_lo = v_lo.min(v0 - rv);
        v_hi = v_hi.max(v0 + rv);
    }
    if !u_lo.is_finite() {
        return Err(Error::NoObservation("hand fully behind camera".into()));
    }
    let margin = cfg.box_margin_px as i64;
    let x0 = (u_lo.floor() as i64 - margin).clamp(0, k.width as i64);
    let x1 = (u_hi.ceil() as i64 + 1 + margin).clamp(0, k.width as i64);
    let y0 = (v_lo.floor() as i64 - margin).clamp(0, k.height as i64);
    let y1 = (v_hi.ceil() as i64 + 1 + margin).clamp(0, k.height as i64);
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::NoObservation("empty box after clipping".into()));
    }
    Ok(BoundingBox {
        x0: x0 as u32,
        y0: y0 as u32,
        x1: x1 as u32,
        y1: y1 as u32,
    })
}

/// Scores one hypothesis against the observation inside `bbox`.
///
/// Renders the hypothesis into a box-sized window (bit-identical to cropping
/// a full-image render) and accumulates in row-major order:
/// both surfaces defined -> C(|dh - do|, T); exactly one defined -> T
/// (silhouette mismatch); neither -> 0.
pub fn evaluate(
    h: &PoseVector,
    d_obs: &DepthMap,
    bbox: &BoundingBox,
    cfg: &ObjectiveConfig,
    g: &HandGeometry,
    k: &CameraIntrinsics,
) -> Result<f64> {
    if d_obs.width != k.width || d_obs.height != k.height {
        return Err(Error::Contract(format!(
            "observation is {}x{}, camera expects {}x{}",
            d_obs.width, d_obs.height, k.width, k.height
        )));
    }
    if bbox.x1 > d_obs.width || bbox.y1 > d_obs.height || bbox.pixel_count() == 0 {
        return Err(Error::Contract("bounding box outside observation".into()));
    }
    let set = forward_kinematics(h, g)?;
    let bw = bbox.width() as usize;
    let bh = bbox.height() as usize;
    let mut rendered = vec![0.0; bw * bh];
    splat_into(
        &set,
        k,
        bbox.x0 as i64,
        bbox.x1 as i64,
        bbox.y0 as i64,
        bbox.y1 as i64,
        bw,
        &mut rendered,
    );

    let t = cfg.clamp_threshold_m;
    let mut sum = 0.0f64;
    for by in 0..bh {
        let obs_row = (bbox.y0 as usize + by) * d_obs.width as usize + bbox.x0 as usize;
        for bx in 0..bw {
            let dh = rendered[by * bw + bx];
            let dobs = d_obs.samples[obs_row + bx];
            sum += match (dh > 0.0, dobs > 0.0) {
                (true, true) => clamp((dh - dobs).abs(), t),
                (false, false) => 0.0,
                _ => t,
            };
        }
    }
    Ok(sum / bbox.pixel_count() as f64)
}

/// Element-wise [`evaluate`]; order preserved, bit-identical to scalar calls.
pub fn evaluate_batch(
    hs: &[PoseVector],
    d_obs: &DepthMap,
    bbox: &BoundingBox,
    cfg: &ObjectiveConfig,
    g: &HandGeometry,
    k: &CameraIntrinsics,
) -> Result<Vec<f64>> {
    hs.iter()
        .map(|h| evaluate(h, d_obs, bbox, cfg, g, k))
        .collect()
}

/// Objective abstraction consumed by the swarm optimizer. Implementations
/// must be pure: same poses in, same scores out, in order.
pub trait SwarmObjective {
    fn evaluate_batch(&self, poses: &[PoseVector]) -> Vec<f64>;
}

/// The per-frame depth objective: one observation, one shared box.
pub struct DepthObjective<'a> {
    pub d_obs: &'a DepthMap,
    pub bbox: BoundingBox,
    pub cfg: &'a ObjectiveConfig,
    pub geometry: &'a HandGeometry,
    pub camera: &'a CameraIntrinsics,
}

impl SwarmObjective for DepthObjective<'_> {
    fn evaluate_batch(&self, poses: &[PoseVector]) -> Vec<f64> {
        // Infeasible poses cannot occur here: the swarm clamps before scoring.
        evaluate_batch(poses, self.d_obs, &self.bbox, self.cfg, self.geometry, self.camera)
            .expect("swarm poses are clamped and the frame box is validated at frame start")
    }
}
