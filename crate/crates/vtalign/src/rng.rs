//! Deterministic PRNG used for every random draw in the crate.
//!
//! All randomness (corpus generation, parameter init, batch shuffling,
//! offset sampling, random correspondence draws, probe splits) flows through
//! [`Rng`], a xorshift64* generator. The update equations are fixed here so
//! any other implementation can reproduce the exact streams:
//!
//! ```text
//! x ^= x >> 12
//! x ^= x << 25
//! x ^= x >> 27
//! output = x * 0x2545F4914F6CDD1D   (wrapping 64-bit multiply)
//! ```
//!
//! A seed of zero (the one fixed point of the xorshift step) is remapped to
//! `0x9E3779B97F4A7C15` before use.
//!
//! Independent streams are derived from a root seed with [`split`], which
//! applies one splitmix64 finalization round to `seed ^ tag`:
//!
//! ```text
//! z = (seed ^ tag) + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z = z ^ (z >> 31)
//! ```
//!
//! Floats come from the top 53 bits (`next_u64() >> 11`), giving uniform
//! values in `[0, 1)`. Gaussians use the Box-Muller transform with both
//! outputs consumed in order, so draw counts stay platform-independent.

/// Stream tags for [`split`]. Keeping them in one place documents which
/// subsystem owns which stream of a run seed.
pub mod stream {
    pub const CORPUS_CYCLE: u64 = 0x01;
    pub const CORPUS_MIXERS: u64 = 0x02;
    pub const CORPUS_VIDEOS: u64 = 0x03;
    pub const CORPUS_PROBE: u64 = 0x04;
    pub const PARAM_INIT: u64 = 0x10;
    pub const BATCH_SHUFFLE: u64 = 0x11;
    pub const WARP_OFFSETS: u64 = 0x12;
    pub const STRATEGY_RANDOM: u64 = 0x13;
    pub const CORPUS_SPLIT: u64 = 0x20;
    pub const PROBE_SPLIT: u64 = 0x21;
    pub const PROBE_INIT: u64 = 0x22;
    pub const SIMILARITY_DRAWS: u64 = 0x23;
    pub const ABLATION_POINT: u64 = 0x30;
}

/// Derive an independent stream seed from a root seed and a stream tag.
///
/// One splitmix64 finalization round; see the module docs for the equations.
pub fn split(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xorshift64* generator. See module docs for the exact update equations.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    /// Second half of the last Box-Muller pair. Streams that get persisted
    /// (shuffle, offsets, strategy draws) never draw gaussians, so the u64
    /// state alone is a complete description of them.
    gaussian_cache: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: if seed == 0 { 0x9E37_79B9_7F4A_7C15 } else { seed },
            gaussian_cache: None,
        }
    }

    /// Resume a generator from a previously captured state (checkpointing).
    pub fn from_state(state: u64) -> Self {
        Rng {
            state: if state == 0 { 0x9E37_79B9_7F4A_7C15 } else { state },
            gaussian_cache: None,
        }
    }

    /// Current internal state, for persistence.
    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`. `bound` must be nonzero.
    ///
    /// Plain modulo; the bias for the bounds used here (< 2^32) is far below
    /// any tolerance in the test suite and keeps the mapping trivial to
    /// reproduce in other languages.
    pub fn next_below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_below: bound must be positive");
        (self.next_u64() % bound as u64) as usize
    }

    /// Uniform in `(-scale, scale)`, excluding exactly zero.
    pub fn next_symmetric(&mut self, scale: f64) -> f64 {
        loop {
            let v = (2.0 * self.next_f64() - 1.0) * scale;
            if v != 0.0 {
                return v;
            }
        }
    }

    /// Standard normal via Box-Muller. Both halves of each pair are used.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(cached) = self.gaussian_cache.take() {
            return cached;
        }
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.gaussian_cache = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher-Yates shuffle in place.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices drawn uniformly from `[0, n)`, in draw order.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample_distinct: k={k} exceeds n={n}");
        let mut pool: Vec<usize> = (0..n).collect();
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let j = self.next_below(pool.len());
            picked.push(pool.swap_remove(j));
        }
        picked
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn zero_seed_is_remapped() {
        let mut r = Rng::new(0);
        assert_ne!(r.next_u64(), 0);
    }

    #[test]
    fn split_streams_differ() {
        let a = split(7, stream::BATCH_SHUFFLE);
        let b = split(7, stream::WARP_OFFSETS);
        assert_ne!(a, b);
        assert_eq!(a, split(7, stream::BATCH_SHUFFLE));
    }

    #[test]
    fn unit_interval_bounds() {
        let mut r = Rng::new(3);
        for _ in 0..10_000 {
            let v = r.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn gaussian_moments_roughly_standard() {
        let mut r = Rng::new(11);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let g = r.next_gaussian();
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut r = Rng::new(5);
        let mut v: Vec<usize> = (0..50).collect();
        r.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn sample_distinct_has_no_duplicates() {
        let mut r = Rng::new(9);
        for _ in 0..100 {
            let s = r.sample_distinct(10, 4);
            let mut d = s.clone();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 4);
        }
    }

    #[test]
    fn state_roundtrip_resumes_stream() {
        let mut a = Rng::new(123);
        for _ in 0..17 {
            a.next_u64();
        }
        let mut b = Rng::from_state(a.state());
        for _ in 0..50 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
