//! Constriction-coefficient particle swarm optimization over the 27-D pose
//! space, split into four sequential phases so each phase is an independently
//! offloadable unit. All randomness is counter-based: a swarm's entire RNG
//! state is one u64 cursor, so serialized state resumes bit-identically on
//! any executor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{clamp_pose_to_limits, HandGeometry, PoseVector, POSE_DIMS};
use crate::objective::SwarmObjective;
use crate::rng::CounterRng;

/// Number of optimization phases per frame.
pub const PHASES: u32 = 4;

/// Counter-space stride between frames; draws per frame stay far below this.
const FRAME_COUNTER_STRIDE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub swarm_size: u32,
    /// Total generations per frame, split evenly across the four phases.
    pub generations_total: u32,
    /// Constriction factor chi.
    pub chi: f64,
    /// Cognitive and social coefficients.
    pub c1: f64,
    pub c2: f64,
    /// Per-dimension half-range for initialization around the frame center.
    pub init_extents: [f64; POSE_DIMS],
    /// Fraction of the swarm re-randomized around gbest at each phase start.
    pub restart_fraction: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        // Sized for 30 fps inter-frame motion with headroom; the tracker
        // widens them after frame skips.
        let mut init_extents = [0.0; POSE_DIMS];
        for (i, e) in init_extents.iter_mut().enumerate() {
            *e = match i {
                0..=2 => 0.008, // position, meters
                3..=6 => 0.03,  // raw quaternion components
                _ => 0.05,      // articulation, radians
            };
        }
        PsoConfig {
            swarm_size: 64,
            generations_total: 40,
            chi: 0.7298,
            c1: 2.05,
            c2: 2.05,
            init_extents,
            restart_fraction: 0.25,
            seed: 1,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::Config("swarm_size must be >= 2".into()));
        }
        if self.generations_total == 0 || !self.generations_total.is_multiple_of(PHASES) {
            return Err(Error::Config(format!(
                "generations_total must be a positive multiple of {PHASES}"
            )));
        }
        if !(self.chi > 0.0 && self.chi <= 1.0) {
            return Err(Error::Config("chi must be in (0, 1]".into()));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 {
            return Err(Error::Config("c1 and c2 must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.restart_fraction) {
            return Err(Error::Config("restart_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn generations_per_phase(&self) -> u32 {
        self.generations_total / PHASES
    }
}

/// The full serializable optimizer state; the unit shipped over the wire in
/// multi-step mode. Personal-best scores start at +inf ("unset") and are
/// filled by the first evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub positions: Vec<[f64; POSE_DIMS]>,
    pub velocities: Vec<[f64; POSE_DIMS]>,
    pub pbest_positions: Vec<[f64; POSE_DIMS]>,
    pub pbest_scores: Vec<f64>,
    pub gbest_position: [f64; POSE_DIMS],
    pub gbest_score: f64,
    pub rng_counter: u64,
    pub phase_index: u8,
    pub generation_index: u32,
}

impl SwarmState {
    pub fn gbest_pose(&self) -> PoseVector {
        PoseVector::from_array(&self.gbest_position)
    }
}

/// Everything a phase needs besides the state itself. `extents` are the
/// effective per-frame initialization half-ranges (base config extents,
/// possibly widened after frame skips).
pub struct PsoContext<'a> {
    pub cfg: &'a PsoConfig,
    pub geometry: &'a HandGeometry,
    pub objective: &'a dyn SwarmObjective,
    pub extents: [f64; POSE_DIMS],
    pub seed: u64,
}

impl<'a> PsoContext<'a> {
    pub fn new(
        cfg: &'a PsoConfig,
        geometry: &'a HandGeometry,
        objective: &'a dyn SwarmObjective,
    ) -> Self {
        PsoContext {
            cfg,
            geometry,
            objective,
            extents: cfg.init_extents,
            seed: cfg.seed,
        }
    }

    pub fn with_extent_scale(mut self, scale: &[f64; POSE_DIMS]) -> Self {
        for (e, s) in self.extents.iter_mut().zip(scale.iter()) {
            *e *= s;
        }
        self
    }
}

fn sample_around(
    center: &[f64; POSE_DIMS],
    extents: &[f64; POSE_DIMS],
    rng: &mut CounterRng,
    g: &HandGeometry,
) -> [f64; POSE_DIMS] {
    let mut v = [0.0; POSE_DIMS];
    for d in 0..POSE_DIMS {
        v[d] = center[d] + (2.0 * rng.next_unit() - 1.0) * extents[d];
    }
    clamp_pose_to_limits(&PoseVector::from_array(&v), g)
        .expect("perturbed unit quaternion cannot collapse to zero norm")
        .to_array()
}

/// Seeds a swarm around the previous frame's solution. Particle 0 is the
/// center itself (elitism); the rest are uniform in `center +- extents` per
/// dimension, clamped feasible. Velocities start at zero and the RNG stream
/// is determined solely by the seed and frame index.
pub fn init_swarm(center: &PoseVector, frame_index: u32, ctx: &PsoContext) -> SwarmState {
    let n = ctx.cfg.swarm_size as usize;
    let mut rng = CounterRng::new(ctx.seed, frame_index as u64 * FRAME_COUNTER_STRIDE);
    let center_arr = center.to_array();

    let mut positions = Vec::with_capacity(n);
    positions.push(center_arr);
    for _ in 1..n {
        positions.push(sample_around(&center_arr, &ctx.extents, &mut rng, ctx.geometry));
    }

    SwarmState {
        pbest_positions: positions.clone(),
        pbest_scores: vec![f64::INFINITY; n],
        gbest_position: center_arr,
        gbest_score: f64::INFINITY,
        velocities: vec![[0.0; POSE_DIMS]; n],
        positions,
        rng_counter: rng.counter(),
        phase_index: 0,
        generation_index: 0,
    }
}

fn update_bests(state: &mut SwarmState, scores: &[f64]) {
    for (i, &score) in scores.iter().enumerate() {
        // strict improvement: ties keep the incumbent
        if score < state.pbest_scores[i] {
            state.pbest_scores[i] = score;
            state.pbest_positions[i] = state.positions[i];
        }
        if score < state.gbest_score {
            state.gbest_score = score;
            state.gbest_position = state.positions[i];
        }
    }
}

/// One generation: score the current positions, update personal/global bests
/// by strict improvement, then apply the canonical constriction update
/// `v <- chi (v + c1 r1 (pbest - x) + c2 r2 (gbest - x))`, `x <- clamp(x + v)`.
pub fn step_generation(state: &mut SwarmState, ctx: &PsoContext) {
    let n = state.positions.len();
    let poses: Vec<PoseVector> = state.positions.iter().map(PoseVector::from_array).collect();
    let scores = ctx.objective.evaluate_batch(&poses);
    debug_assert_eq!(scores.len(), n);
    update_bests(state, &scores);

    let mut rng = CounterRng::new(ctx.seed, state.rng_counter);
    for i in 0..n {
        let mut moved = state.positions[i];
        for d in 0..POSE_DIMS {
            let r1 = rng.next_unit();
            let r2 = rng.next_unit();
            let x = state.positions[i][d];
            let v = state.velocities[i][d]
                + ctx.cfg.c1 * r1 * (state.pbest_positions[i][d] - x)
                + ctx.cfg.c2 * r2 * (state.gbest_position[d] - x);
            let v = ctx.cfg.chi * v;
            state.velocities[i][d] = v;
            moved[d] = x + v;
        }
        state.positions[i] = clamp_pose_to_limits(&PoseVector::from_array(&moved), ctx.geometry)
            .expect("constriction update cannot zero a unit quaternion")
            .to_array();
    }
    state.rng_counter = rng.counter();
    state.generation_index += 1;
}

/// Runs one of the four phases: on phases >= 1, first re-randomize the worst
/// `floor(restart_fraction * N)` particles uniformly around gbest with the
/// extents halved once per completed phase (coarse to fine), then run
/// `generations_total / 4` generations.
pub fn run_phase(state: &mut SwarmState, ctx: &PsoContext) -> Result<()> {
    if state.phase_index >= PHASES as u8 {
        return Err(Error::Contract(format!(
            "phase_index {} out of range",
            state.phase_index
        )));
    }

    if state.phase_index > 0 {
        restart_worst(state, ctx);
    }

    let mut prev_gbest = state.gbest_score;
    for _ in 0..ctx.cfg.generations_per_phase() {
        step_generation(state, ctx);
        assert!(
            state.gbest_score <= prev_gbest,
            "gbest regressed: {} -> {}",
            prev_gbest,
            state.gbest_score
        );
        prev_gbest = state.gbest_score;
    }
    state.phase_index += 1;
    Ok(())
}

fn restart_worst(state: &mut SwarmState, ctx: &PsoContext) {
    let n = state.positions.len();
    let k = (ctx.cfg.restart_fraction * n as f64).floor() as usize;
    if k == 0 {
        return;
    }
    // Rank by personal-best score; on ties higher indices restart first, so
    // the best-ranked particle always survives.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        state.pbest_scores[a]
            .partial_cmp(&state.pbest_scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut worst: Vec<usize> = order[n - k..].to_vec();
    worst.sort_unstable(); // deterministic draw order by particle index

    let mut extents = ctx.extents;
    let halving = 2f64.powi(state.phase_index as i32);
    for e in extents.iter_mut() {
        *e /= halving;
    }

    let mut rng = CounterRng::new(ctx.seed, state.rng_counter);
    for &i in &worst {
        let fresh = sample_around(&state.gbest_position, &extents, &mut rng, ctx.geometry);
        state.positions[i] = fresh;
        state.velocities[i] = [0.0; POSE_DIMS];
        // forget the old personal best; the next evaluation pass refills it
        state.pbest_positions[i] = fresh;
        state.pbest_scores[i] = f64::INFINITY;
    }
    state.rng_counter = rng.counter();
}

/// Runs all four phases in place; the fused-frame task body.
pub fn run_all_phases(state: &mut SwarmState, ctx: &PsoContext) -> Result<()> {
    while state.phase_index < PHASES as u8 {
        run_phase(state, ctx)?;
    }
    Ok(())
}
