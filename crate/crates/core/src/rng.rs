//! Counter-based deterministic RNG.
//!
//! Every random quantity in this crate is derived from a 64-bit seed through
//! `RngState`. The generator is a pure function of `(key, counter)`, so a
//! stream can be checkpointed by saving two integers and resumed exactly.
//! Independent streams for different purposes (init, shuffling, per-layer
//! noise, per-sample noise) are derived with [`RngState::stream`] instead of
//! sharing one sequence.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: bijective 64-bit mixer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic, splittable random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    key: u64,
    counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { key: seed, counter: 0 }
    }

    /// Derives an independent stream; `(key, id)` pairs map to distinct keys.
    pub fn stream(&self, id: u64) -> RngState {
        RngState {
            key: mix64(self.key ^ mix64(id.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    /// Raw state for checkpointing.
    pub fn state(&self) -> (u64, u64) {
        (self.key, self.counter)
    }

    /// Rebuilds a stream at an exact position.
    pub fn from_state(key: u64, counter: u64) -> Self {
        RngState { key, counter }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform sample in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the Marsaglia polar transform.
    ///
    /// Uses only `sqrt` and `ln`, both of which are deterministic for a given
    /// build, so streams replay bit-exactly.
    pub fn next_gaussian(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            idx.swap(i, j);
        }
        idx
    }
}
