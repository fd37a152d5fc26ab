//! JSON configuration: one file with optional sections, unknown keys
//! rejected, command-line overrides win. Also the canonical digests the
//! registration handshake compares.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinematics::{CameraIntrinsics, HandGeometry};
use crate::objective::ObjectiveConfig;
use crate::offload::PolicyConfig;
use crate::pso::PsoConfig;
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicsSection {
    pub geometry: Option<HandGeometry>,
    pub camera: Option<CameraIntrinsics>,
}

/// The merged configuration view; every section falls back to compiled-in
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub kinematics: KinematicsSection,
    pub objective: ObjectiveConfig,
    pub pso: PsoConfig,
    pub policy: PolicyConfig,
    pub tracker: TrackerConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Config = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        self.camera().validate()?;
        self.objective.validate()?;
        self.pso.validate()?;
        self.policy.validate()?;
        self.tracker.validate()?;
        Ok(())
    }

    pub fn geometry(&self) -> HandGeometry {
        self.kinematics.geometry.clone().unwrap_or_default()
    }

    pub fn camera(&self) -> CameraIntrinsics {
        self.kinematics.camera.unwrap_or_default()
    }

    pub fn worker_context(&self) -> Result<crate::worker::WorkerContext> {
        crate::worker::WorkerContext::new(
            self.geometry(),
            self.camera(),
            self.objective,
            self.pso.clone(),
        )
    }
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_be_bytes());
}

/// Canonical byte encoding of the hand geometry and camera; any numeric
/// difference changes the digest and refuses registration.
pub fn geometry_digest(g: &HandGeometry, k: &CameraIntrinsics) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(1024);
    push_f64(&mut bytes, g.palm_width);
    push_f64(&mut bytes, g.palm_height);
    push_f64(&mut bytes, g.palm_sphere_radius);
    for f in &g.fingers {
        for v in f.base_offset {
            push_f64(&mut bytes, v);
        }
        for v in f.segment_lengths {
            push_f64(&mut bytes, v);
        }
        for v in f.segment_radii {
            push_f64(&mut bytes, v);
        }
    }
    for lim in &g.joint_limits {
        push_f64(&mut bytes, lim[0]);
        push_f64(&mut bytes, lim[1]);
    }
    push_f64(&mut bytes, k.fx);
    push_f64(&mut bytes, k.fy);
    push_f64(&mut bytes, k.cx);
    push_f64(&mut bytes, k.cy);
    bytes.extend_from_slice(&k.width.to_be_bytes());
    bytes.extend_from_slice(&k.height.to_be_bytes());
    Sha256::digest(&bytes).into()
}

/// Canonical byte encoding of the objective and optimizer constants. The
/// seed is excluded: it travels with every request, so differing configured
/// seeds cannot cause divergence.
pub fn config_digest(obj: &ObjectiveConfig, pso: &PsoConfig) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(512);
    push_f64(&mut bytes, obj.clamp_threshold_m);
    bytes.extend_from_slice(&obj.box_margin_px.to_be_bytes());
    bytes.extend_from_slice(&pso.swarm_size.to_be_bytes());
    bytes.extend_from_slice(&pso.generations_total.to_be_bytes());
    push_f64(&mut bytes, pso.chi);
    push_f64(&mut bytes, pso.c1);
    push_f64(&mut bytes, pso.c2);
    for e in pso.init_extents {
        push_f64(&mut bytes, e);
    }
    push_f64(&mut bytes, pso.restart_fraction);
    Sha256::digest(&bytes).into()
}
