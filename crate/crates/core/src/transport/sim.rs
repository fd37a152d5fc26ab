//! Deterministic simulated links. A delivery delay is a pure function of
//! (profile, send counter, payload size), so replays are bit-identical and
//! virtual-clock benchmarks never sleep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::unit_at;

/// Send-counter slot reserved for calibration traffic, outside the frame
/// index range, so warm-up sends never shift the per-frame jitter draws.
pub const CALIBRATION_SLOT: u64 = 1 << 40;

/// Latency/bandwidth/jitter model for one link direction.
///
/// The built-in profiles are artifact constants embodying the qualitative
/// setup of a fast wired link and a congested Wi-Fi link, not measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkProfile {
    pub name: String,
    pub base_latency_ms: f64,
    /// Uniform jitter bounds added to the base one-way latency.
    pub jitter_min_ms: f64,
    pub jitter_max_ms: f64,
    pub bandwidth_bytes_per_ms: f64,
    pub jitter_seed: u64,
}

impl NetworkProfile {
    /// Gigabit-class wire: 0.3 ms one-way +-0.1 ms, 125000 bytes/ms.
    pub fn ethernet() -> Self {
        NetworkProfile {
            name: "ethernet".into(),
            base_latency_ms: 0.3,
            jitter_min_ms: -0.1,
            jitter_max_ms: 0.1,
            bandwidth_bytes_per_ms: 125_000.0,
            jitter_seed: 7,
        }
    }

    /// Congested 802.11: one-way latency uniform in [10, 60] ms, 3125 bytes/ms.
    pub fn wifi() -> Self {
        NetworkProfile {
            name: "wifi".into(),
            base_latency_ms: 10.0,
            jitter_min_ms: 0.0,
            jitter_max_ms: 50.0,
            bandwidth_bytes_per_ms: 3125.0,
            jitter_seed: 7,
        }
    }

    /// Zero-delay in-memory link for executor-equivalence runs.
    pub fn loopback() -> Self {
        NetworkProfile {
            name: "loopback".into(),
            base_latency_ms: 0.0,
            jitter_min_ms: 0.0,
            jitter_max_ms: 0.0,
            bandwidth_bytes_per_ms: 1e15,
            jitter_seed: 0,
        }
    }

    /// Built-in profile by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ethernet" => Ok(Self::ethernet()),
            "wifi" => Ok(Self::wifi()),
            "loopback" => Ok(Self::loopback()),
            other => Err(Error::Config(format!("unknown network profile '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_latency_ms + self.jitter_min_ms < 0.0 {
            return Err(Error::Config("one-way latency can go negative".into()));
        }
        if self.jitter_max_ms < self.jitter_min_ms {
            return Err(Error::Config("jitter bounds inverted".into()));
        }
        if self.bandwidth_bytes_per_ms.is_nan() || self.bandwidth_bytes_per_ms <= 0.0 {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        Ok(())
    }

    pub fn mean_one_way_ms(&self) -> f64 {
        self.base_latency_ms + (self.jitter_min_ms + self.jitter_max_ms) / 2.0
    }
}

/// One-way delivery delay in milliseconds:
/// base latency + jittered draw at `send_counter` + payload transfer time.
pub fn simulated_send(payload_bytes: usize, profile: &NetworkProfile, send_counter: u64) -> f64 {
    let jitter = if profile.jitter_max_ms > profile.jitter_min_ms {
        profile.jitter_min_ms
            + (profile.jitter_max_ms - profile.jitter_min_ms)
                * unit_at(profile.jitter_seed, send_counter)
    } else {
        profile.jitter_min_ms
    };
    profile.base_latency_ms + jitter + payload_bytes as f64 / profile.bandwidth_bytes_per_ms
}

/// A simulated link whose send counter is keyed by (frame slot, sequence
/// within the slot), so the draws a frame sees do not depend on how much
/// traffic earlier frames or calibration produced.
#[derive(Debug, Clone)]
pub struct SimChannel {
    pub profile: NetworkProfile,
}

/// Sequence numbers per slot are packed into the low 16 bits of the counter.
const SEQ_BITS: u32 = 16;

impl SimChannel {
    pub fn new(profile: NetworkProfile) -> Self {
        SimChannel { profile }
    }

    pub fn delay_ms(&self, slot: u64, seq: u16, payload_bytes: usize) -> f64 {
        let counter = (slot << SEQ_BITS) | seq as u64;
        simulated_send(payload_bytes, &self.profile, counter)
    }
}
