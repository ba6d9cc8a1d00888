//! Seeded pseudo-random numbers for reproducible simulations.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood's 64-bit finalizer-based
//! generator, the same stream produced by Java's `SplittableRandom`). It is
//! pinned here rather than taken from a crate so that identical seeds produce
//! identical traces on every platform and toolchain this project will ever
//! run on. Child generators are derived by seeding a fresh state from the
//! parent stream, which keeps per-run and per-component streams independent
//! without sharing state.

/// SplitMix64 generator state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Next 64 uniformly distributed bits.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[0, hi)`.
    pub fn uniform(&mut self, hi: f64) -> f64 {
        self.next_f64() * hi
    }

    /// Derive an independent child generator.
    pub fn split(&mut self) -> SplitMix64 {
        SplitMix64::new(self.next_u64())
    }
}
