//! The 27-parameter hand model: 3 position + 4 quaternion + 20 bone angles,
//! a fixed sphere-splat geometry, forward kinematics, and a z-min depth
//! renderer producing maps directly comparable with observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of optimized parameters: 3 position + 4 quaternion + 20 articulation.
pub const POSE_DIMS: usize = 27;
/// Articulation parameters: 5 fingers x (mcp_flex, mcp_abduct, pip_flex, dip_flex).
pub const ARTICULATION_DIMS: usize = 20;
/// Fingers in parameter order.
pub const FINGER_COUNT: usize = 5;
/// Bone segments per finger.
pub const SEGMENTS_PER_FINGER: usize = 3;
/// Spheres splatted along each bone segment.
pub const SPHERES_PER_SEGMENT: usize = 4;
/// Palm spheres: a 3x3 grid.
pub const PALM_SPHERES: usize = 9;
/// Total spheres for one posed hand.
pub const SPHERES_PER_HAND: usize =
    PALM_SPHERES + FINGER_COUNT * SEGMENTS_PER_FINGER * SPHERES_PER_SEGMENT;

/// One hand pose hypothesis `h`.
///
/// `orientation` is stored (w, x, y, z). Articulation is indexed
/// `finger * 4 + j` with `j` in {0: mcp_flex, 1: mcp_abduct, 2: pip_flex,
/// 3: dip_flex} and fingers ordered thumb, index, middle, ring, pinky.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseVector {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
    pub articulation: [f64; ARTICULATION_DIMS],
}

impl PoseVector {
    /// Identity orientation at the camera origin, fingers straight.
    pub fn identity() -> Self {
        PoseVector {
            position: [0.0; 3],
            orientation: [1.0, 0.0, 0.0, 0.0],
            articulation: [0.0; ARTICULATION_DIMS],
        }
    }

    /// Flatten to the canonical 27-vector ordering.
    pub fn to_array(&self) -> [f64; POSE_DIMS] {
        let mut out = [0.0; POSE_DIMS];
        out[..3].copy_from_slice(&self.position);
        out[3..7].copy_from_slice(&self.orientation);
        out[7..].copy_from_slice(&self.articulation);
        out
    }

    pub fn from_array(v: &[f64; POSE_DIMS]) -> Self {
        let mut pose = PoseVector::identity();
        pose.position.copy_from_slice(&v[..3]);
        pose.orientation.copy_from_slice(&v[3..7]);
        pose.articulation.copy_from_slice(&v[7..]);
        pose
    }

    /// Round-trip every parameter through f32, the precision used for pose
    /// centers on the wire. Applied once at frame intake so local and remote
    /// executors start from identical numbers.
    pub fn quantize_f32(&self) -> Self {
        let mut v = self.to_array();
        for x in v.iter_mut() {
            *x = *x as f32 as f64;
        }
        PoseVector::from_array(&v)
    }
}

/// Normalizes a quaternion to unit length, preserving orientation.
///
/// Bitwise idempotent: a quaternion already unit within a few ulps passes
/// through unchanged, so re-clamping a feasible pose never drifts its bits.
pub fn normalize_quaternion(q: [f64; 4]) -> Result<[f64; 4]> {
    let norm2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if norm2 <= 1e-24 {
        return Err(Error::InvalidPose("zero-norm quaternion".into()));
    }
    if (norm2 - 1.0).abs() <= 16.0 * f64::EPSILON {
        return Ok(q);
    }
    let norm = norm2.sqrt();
    Ok([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm])
}

/// Rotates `v` by unit quaternion `q` via the expanded sandwich product.
fn rotate(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    // t = 2 q_vec x v
    let tx = 2.0 * (y * v[2] - z * v[1]);
    let ty = 2.0 * (z * v[0] - x * v[2]);
    let tz = 2.0 * (x * v[1] - y * v[0]);
    [
        v[0] + w * tx + (y * tz - z * ty),
        v[1] + w * ty + (z * tx - x * tz),
        v[2] + w * tz + (x * ty - y * tx),
    ]
}

/// Per-finger fixed geometry, all lengths in meters, palm frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerGeometry {
    pub base_offset: [f64; 3],
    pub segment_lengths: [f64; SEGMENTS_PER_FINGER],
    pub segment_radii: [f64; SEGMENTS_PER_FINGER],
}

/// The fixed, versioned hand geometry. The thumb reuses the common finger
/// parameter layout; anatomical fidelity is out of scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandGeometry {
    pub palm_width: f64,
    pub palm_height: f64,
    pub palm_sphere_radius: f64,
    /// thumb, index, middle, ring, pinky
    pub fingers: [FingerGeometry; FINGER_COUNT],
    /// `[min, max]` per articulation parameter, same indexing as PoseVector.
    pub joint_limits: [[f64; 2]; ARTICULATION_DIMS],
}

const FLEX_LIMITS: [f64; 2] = [0.0, 1.6];
const ABDUCT_LIMITS: [f64; 2] = [-0.35, 0.35];

impl Default for HandGeometry {
    fn default() -> Self {
        let finger = |x: f64, lengths: [f64; 3]| FingerGeometry {
            base_offset: [x, 0.045, 0.0],
            segment_lengths: lengths,
            segment_radii: [0.009, 0.008, 0.007],
        };
        let mut joint_limits = [[0.0; 2]; ARTICULATION_DIMS];
        for f in 0..FINGER_COUNT {
            joint_limits[f * 4] = FLEX_LIMITS;
            joint_limits[f * 4 + 1] = ABDUCT_LIMITS;
            joint_limits[f * 4 + 2] = FLEX_LIMITS;
            joint_limits[f * 4 + 3] = FLEX_LIMITS;
        }
        HandGeometry {
            palm_width: 0.08,
            palm_height: 0.09,
            palm_sphere_radius: 0.012,
            fingers: [
                finger(-0.040, [0.032, 0.025, 0.020]),
                finger(-0.020, [0.035, 0.025, 0.020]),
                finger(0.0, [0.040, 0.028, 0.022]),
                finger(0.020, [0.036, 0.026, 0.020]),
                finger(0.040, [0.030, 0.020, 0.018]),
            ],
            joint_limits,
        }
    }
}

impl HandGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.palm_width <= 0.0 || self.palm_height <= 0.0 || self.palm_sphere_radius <= 0.0 {
            return Err(Error::Config("palm dimensions must be positive".into()));
        }
        for f in &self.fingers {
            if f.segment_lengths.iter().any(|&l| l <= 0.0)
                || f.segment_radii.iter().any(|&r| r <= 0.0)
            {
                return Err(Error::Config(
                    "segment lengths and radii must be positive".into(),
                ));
            }
        }
        for lim in &self.joint_limits {
            if lim[0] >= lim[1] {
                return Err(Error::Config("joint limit min must be < max".into()));
            }
        }
        Ok(())
    }

    pub fn sphere_count(&self) -> usize {
        SPHERES_PER_HAND
    }
}

/// Pinhole camera. Pixel (ix, iy) samples the ray through continuous image
/// coordinate (ix, iy); projection is `u = fx*x/z + cx`, `v = fy*y/z + cy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics {
            fx: 120.0,
            fy: 120.0,
            cx: 64.0,
            cy: 64.0,
            width: 128,
            height: 128,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if self.cx < 0.0
            || self.cx >= self.width as f64
            || self.cy < 0.0
            || self.cy >= self.height as f64
        {
            return Err(Error::Config("principal point outside image".into()));
        }
        Ok(())
    }
}

/// A rectangular grid of depth samples in meters; 0 means "no surface".
///
/// All depths are snapped to the 1 mm wire grid (see [`quantize_depth_m`]),
/// so a map survives the u16-millimeter wire encoding bit-exactly and local
/// and remote executors always score identical observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub samples: Vec<f64>,
}

/// Snap a depth in meters to the millimeter grid used on the wire.
pub fn quantize_depth_m(depth_m: f64) -> f64 {
    quantize_depth_mm(depth_m) as f64 / 1000.0
}

/// Millimeter quantization with u16 saturation (65.535 m far limit).
pub fn quantize_depth_mm(depth_m: f64) -> u16 {
    let mm = (depth_m * 1000.0).round();
    if mm <= 0.0 {
        0
    } else if mm >= u16::MAX as f64 {
        u16::MAX
    } else {
        mm as u16
    }
}

impl DepthMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        DepthMap {
            width,
            height,
            samples: vec![0.0; (width * height) as usize],
        }
    }

    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.samples[(y * self.width + x) as usize]
    }

    /// Re-snap every sample to the millimeter grid (idempotent).
    pub fn quantize(&self) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|&d| quantize_depth_m(d)).collect(),
        }
    }
}

/// Posed hand expressed as camera-frame spheres.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePrimitiveSet {
    /// (center xyz in meters, radius in meters)
    pub spheres: Vec<([f64; 3], f64)>,
}

/// Poses the hand: palm grid plus per-finger three-segment chains, each
/// segment splatted as four spheres at fractions 1/4..4/4 along the bone, so
/// the last sphere center of the distal segment is the fingertip.
///
/// Palm frame: +X across the palm (thumb to pinky), +Y toward the fingertips,
/// +Z the palm normal. Abduction rotates about +Z, flexion about +X
/// (right-hand rule; positive flexion curls toward +Z).
pub fn forward_kinematics(h: &PoseVector, g: &HandGeometry) -> Result<SpherePrimitiveSet> {
    let q = normalize_quaternion(h.orientation)?;
    let mut spheres = Vec::with_capacity(SPHERES_PER_HAND);

    let place = |local: [f64; 3]| -> [f64; 3] {
        let r = rotate(q, local);
        [
            h.position[0] + r[0],
            h.position[1] + r[1],
            h.position[2] + r[2],
        ]
    };

    let half_w = g.palm_width / 2.0;
    let half_h = g.palm_height / 2.0;
    for gy in 0..3 {
        for gx in 0..3 {
            let local = [
                -half_w + gx as f64 * half_w,
                -half_h + gy as f64 * half_h,
                0.0,
            ];
            spheres.push((place(local), g.palm_sphere_radius));
        }
    }

    for (f, finger) in g.fingers.iter().enumerate() {
        let mcp_flex = h.articulation[f * 4];
        let mcp_abduct = h.articulation[f * 4 + 1];
        let pip_flex = h.articulation[f * 4 + 2];
        let dip_flex = h.articulation[f * 4 + 3];

        // Accumulated rotation matrix columns are unnecessary: bones always
        // extend along local +Y, so track the rotated +Y direction directly.
        let mut joint = finger.base_offset;
        let mut flex_total = mcp_flex;
        let (sin_a, cos_a) = mcp_abduct.sin_cos();
        for seg in 0..SEGMENTS_PER_FINGER {
            if seg == 1 {
                flex_total += pip_flex;
            } else if seg == 2 {
                flex_total += dip_flex;
            }
            let (sin_f, cos_f) = flex_total.sin_cos();
            // Rz(abduct) * Rx(flex_total) applied to (0, L, 0)
            let dir = [-sin_a * cos_f, cos_a * cos_f, sin_f];
            let len = finger.segment_lengths[seg];
            let radius = finger.segment_radii[seg];
            let end = [
                joint[0] + dir[0] * len,
                joint[1] + dir[1] * len,
                joint[2] + dir[2] * len,
            ];
            for k in 0..SPHERES_PER_SEGMENT {
                let t = (k + 1) as f64 / SPHERES_PER_SEGMENT as f64;
                let local = [
                    joint[0] + (end[0] - joint[0]) * t,
                    joint[1] + (end[1] - joint[1]) * t,
                    joint[2] + (end[2] - joint[2]) * t,
                ];
                spheres.push((place(local), radius));
            }
            joint = end;
        }
    }

    Ok(SpherePrimitiveSet { spheres })
}

/// Camera-frame fingertip positions (thumb..pinky), for error metrics.
pub fn fingertip_positions(h: &PoseVector, g: &HandGeometry) -> Result<[[f64; 3]; FINGER_COUNT]> {
    let set = forward_kinematics(h, g)?;
    let mut tips = [[0.0; 3]; FINGER_COUNT];
    for f in 0..FINGER_COUNT {
        // last sphere of the distal segment
        let idx = PALM_SPHERES + (f + 1) * SEGMENTS_PER_FINGER * SPHERES_PER_SEGMENT - 1;
        tips[f] = set.spheres[idx].0;
    }
    Ok(tips)
}

/// Renders a sphere set to a depth map with the flat-disc approximation:
/// each sphere with center depth `z` covers the projected ellipse of pixel
/// semi-axes `(fx*r/z, fy*r/z)` at constant depth `z - r`, and overlapping
/// pixels keep the minimum depth. Spheres with center z <= 0 are skipped.
pub fn render_depth(s: &SpherePrimitiveSet, k: &CameraIntrinsics) -> DepthMap {
    let mut map = DepthMap::zeros(k.width, k.height);
    splat_into(
        s,
        k,
        0,
        k.width as i64,
        0,
        k.height as i64,
        k.width as usize,
        &mut map.samples,
    );
    map
}

/// Shared splat kernel: writes sphere discs into `buf`, a row-major window
/// `[x0, x1) x [y0, y1)` of the image with row stride `stride`. Rendering a
/// window is bit-identical to rendering the full image and cropping.
#[allow(clippy::too_many_arguments)]
pub(crate) fn splat_into(
    s: &SpherePrimitiveSet,
    k: &CameraIntrinsics,
    x0: i64,
    x1: i64,
    y0: i64,
    y1: i64,
    stride: usize,
    buf: &mut [f64],
) {
    for &(center, radius) in &s.spheres {
        let z = center[2];
        if z <= 0.0 {
            continue;
        }
        let depth = quantize_depth_m(z - radius);
        if depth <= 0.0 {
            continue; // surface at or behind the camera plane
        }
        let u0 = k.fx * center[0] / z + k.cx;
        let v0 = k.fy * center[1] / z + k.cy;
        let ru = k.fx * radius / z;
        let rv = k.fy * radius / z;
        let px_lo = ((u0 - ru).ceil() as i64).max(x0);
        let px_hi = ((u0 + ru).floor() as i64).min(x1 - 1);
        let py_lo = ((v0 - rv).ceil() as i64).max(y0);
        let py_hi = ((v0 + rv).floor() as i64).min(y1 - 1);
        for py in py_lo..=py_hi {
            let dy = (py as f64 - v0) / rv;
            for px in px_lo..=px_hi {
                let dx = (px as f64 - u0) / ru;
                if dx * dx + dy * dy <= 1.0 {
                    let idx = (py - y0) as usize * stride + (px - x0) as usize;
                    if buf[idx] == 0.0 || depth < buf[idx] {
                        buf[idx] = depth;
                    }
                }
            }
        }
    }
}

/// Clips articulation into the joint limits and normalizes the quaternion;
/// position passes through. Keeps swarm particles feasible.
pub fn clamp_pose_to_limits(h: &PoseVector, g: &HandGeometry) -> Result<PoseVector> {
    let mut out = *h;
    out.orientation = normalize_quaternion(h.orientation)?;
    for (i, a) in out.articulation.iter_mut().enumerate() {
        *a = a.clamp(g.joint_limits[i][0], g.joint_limits[i][1]);
    }
    Ok(out)
}
