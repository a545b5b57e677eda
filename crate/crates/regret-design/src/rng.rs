//! Reproducible pseudorandom source for simulation.
//!
//! A 64-bit counter-based generator: output `i` is the SplitMix64
//! finalizer applied to `key + (i+1) * GOLDEN_GAMMA`. The same (seed,
//! counter) pair yields the same value on every platform, which keeps
//! simulation outputs byte-stable across runs and implementations.
//! Normal variates use the Box-Muller transform (two uniforms per pair)
//! rather than a rejection method so draw counts are input-independent.

/// Weyl-sequence increment of SplitMix64 (2^64 / phi, odd).
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
    z ^ (z >> 31)
}

/// Counter-based generator with an explicit stream key.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    cached_normal: Option<f64>,
}

impl CounterRng {
    /// Stream 0 for a seed.
    pub fn new(seed: u64) -> Self {
        Self::for_worker(seed, 0)
    }

    /// Derives an independent stream for `(seed, worker)`. Used to
    /// partition simulation replications deterministically across
    /// workers.
    pub fn for_worker(seed: u64, worker: u64) -> Self {
        let key = mix64(mix64(seed ^ GOLDEN_GAMMA).wrapping_add(worker.wrapping_mul(MIX_2)));
        CounterRng {
            key,
            counter: 0,
            cached_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on (0, 1]: 53-bit mantissa, never zero (safe under `ln`).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; the paired variate is cached.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Fills `out` with independent standard normals.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}
