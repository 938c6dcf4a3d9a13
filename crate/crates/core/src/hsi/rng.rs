//! Counter-addressed random streams.
//!
//! Draw `i` of a stream is SplitMix64's output at position `i`, so any
//! voxel's noise can be regenerated from `(seed, stream, index)` alone.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags; distinct tags give independent streams for the same seed.
pub mod stream {
    pub const NOISE: u64 = 0x6e6f697365;
    pub const BAND_SIGMA: u64 = 0x7369676d61;
    pub const SYNTH: u64 = 0x73796e7468;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        CounterRng {
            key: mix(seed.wrapping_add(GOLDEN) ^ mix(stream)),
        }
    }

    pub fn bits(&self, counter: u64) -> u64 {
        mix(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    fn uniform_open(&self, counter: u64) -> f64 {
        ((self.bits(counter) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw `i` via Box-Muller on draws `2i` and `2i+1`
    /// (cosine branch).
    pub fn gaussian(&self, i: u64) -> f64 {
        let u1 = self.uniform_open(2 * i);
        let u2 = self.uniform(2 * i + 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Child seed for a tuple of indices (epoch, step, sample, ...).
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed ^ GOLDEN), |acc, &p| mix(acc ^ mix(p.wrapping_add(GOLDEN))))
}
