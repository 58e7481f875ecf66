//! Counter-based deterministic random streams.
//!
//! Every estimator in this crate draws from `CounterRng`, a SplitMix64-style
//! generator addressed by `(seed, stream)`. The i-th output is a pure function
//! of the key and the counter, so independent substreams can be handed to
//! parallel workers and the combined result is bit-identical to a serial run.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based generator. Output `i` of stream `s` under seed
/// `k` is `mix64(key(k, s) + (i + 1) * GOLDEN)`; no state beyond the counter.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Stream 0 for a seed.
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent substream: distinct `stream` values give decorrelated keys.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let key = mix64(seed ^ GOLDEN) ^ mix64(stream.wrapping_mul(GOLDEN) ^ 0x8000_0000_0000_0001);
        Self { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    #[inline]
    pub fn next_sym(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    pub fn next_i64_in(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        let span = (hi - lo + 1) as u64;
        lo + (self.next_u64() % span) as i64
    }

    /// Standard normal deviate (Box-Muller; consumes two draws).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        r * (std::f64::consts::TAU * u2).cos()
    }

    /// Fill `out` with a uniform point in the cube `[-1, 1)^n`.
    #[inline]
    pub fn fill_cube(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.next_sym();
        }
    }
}

/// Fixed chunk size used by the parallel estimators. Results are reduced in
/// chunk order, so the worker count never changes the output.
pub const CHUNK: u64 = 1 << 16;

/// Number of chunks needed for `samples` draws.
pub fn chunk_count(samples: u64) -> u64 {
    samples.div_ceil(CHUNK)
}

/// Sample index range covered by chunk `c`.
pub fn chunk_range(c: u64, samples: u64) -> std::ops::Range<u64> {
    let lo = c * CHUNK;
    lo..samples.min(lo + CHUNK)
}
