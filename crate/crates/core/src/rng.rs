//! Seeded random streams.
//!
//! Every stochastic component draws from an [`RngStream`]: a splitmix64
//! counter generator keyed by `(seed, stream_id)`. Uniforms take the top 53
//! bits of each output; normals use the polar Box–Muller transform and cache
//! the second deviate. The output sequence depends on nothing but the key, so
//! runs replay bit-for-bit across platforms.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// The splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    state: u64,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let state = mix64(seed) ^ mix64(stream_id.wrapping_mul(STREAM_SALT).wrapping_add(GOLDEN_GAMMA));
        Self {
            seed,
            stream_id,
            state,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A new stream sharing this stream's seed.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal deviate (polar Box–Muller).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference splitmix64 (Vigna), kept separate from the stream type.
    fn reference_splitmix64(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    #[test]
    fn matches_reference_splitmix64() {
        let mut rng = RngStream::new(1, 0);
        let mut state = rng.state;
        for _ in 0..100 {
            assert_eq!(rng.next_u64(), reference_splitmix64(&mut state));
        }
    }

    #[test]
    fn reference_vector_from_seed_zero() {
        // First outputs of splitmix64 from state 0, as published with the
        // reference implementation.
        let mut state = 0u64;
        assert_eq!(reference_splitmix64(&mut state), 0xE220A8397B1DCDAF);
        assert_eq!(reference_splitmix64(&mut state), 0x6E789E6AA1B965F4);
    }

    #[test]
    fn golden_uniforms_seed_one_stream_zero() {
        let mut rng = RngStream::new(1, 0);
        let a = rng.uniform();
        let b = rng.uniform();
        assert_eq!(a.to_bits(), GOLDEN_U0.to_bits(), "got {a:?}");
        assert_eq!(b.to_bits(), GOLDEN_U1.to_bits(), "got {b:?}");
    }

    // frozen from an independent Python evaluation of the same construction
    const GOLDEN_U0: f64 = 0.2047994163213568;
    const GOLDEN_U1: f64 = 0.41833748345856436;

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let mut c = RngStream::new(8, 0);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_ne!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        for _ in 0..1000 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
        let mut c = a.clone();
        for _ in 0..10 {
            assert_eq!(a.normal().to_bits(), c.normal().to_bits());
        }
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(1, 0);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.normal();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }
}
