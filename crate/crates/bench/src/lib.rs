//! Shared fixtures for the microbenchmarks.

use edgehand_core::kinematics::{
    forward_kinematics, render_depth, DepthMap, PoseVector,
};
use edgehand_core::objective::{bounding_box, BoundingBox};
use edgehand_core::worker::WorkerContext;

/// A hand mid-frame: centered, fingers part-flexed, defaults everywhere.
pub fn fixture() -> (WorkerContext, PoseVector, DepthMap, BoundingBox) {
    let wc = WorkerContext::with_defaults();
    let mut pose = PoseVector::identity();
    pose.position = [0.0, 0.0, 0.4];
    for f in 0..5 {
        pose.articulation[f * 4] = 0.5;
        pose.articulation[f * 4 + 2] = 0.4;
        pose.articulation[f * 4 + 3] = 0.25;
    }
    let pose = pose.quantize_f32();
    let obs = render_depth(&forward_kinematics(&pose, &wc.geometry).unwrap(), &wc.camera);
    let bbox = bounding_box(&pose, &wc.geometry, &wc.camera, &wc.objective).unwrap();
    (wc, pose, obs, bbox)
}
