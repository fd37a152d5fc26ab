//! Counter-based random numbers: every value is a pure function of
//! `(seed, counter)`, so a stream's entire state is one `u64` that can ride
//! along in serialized swarm state and resume bit-identically on any host.

/// SplitMix64 finalizer over `seed ^ (counter * golden ratio)`.
///
/// Not cryptographic; chosen for full 64-bit avalanche and portability.
pub fn value_at(seed: u64, counter: u64) -> u64 {
    let mut z = seed ^ counter.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform f64 in `[0, 1)` at a given stream position.
pub fn unit_at(seed: u64, counter: u64) -> f64 {
    // 53 mantissa bits
    (value_at(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A sequential cursor over the counter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, counter: u64) -> Self {
        CounterRng { seed, counter }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = value_at(self.seed, self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        let v = unit_at(self.seed, self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }

    /// Standard normal via Box-Muller. Consumes exactly two counter steps.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_unit(); // (0, 1]
        let u2 = self.next_unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
