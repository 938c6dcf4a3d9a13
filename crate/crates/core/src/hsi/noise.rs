use super::rng::{stream, CounterRng};
use super::{HsiCube, HsiError, Result};
use crate::tensor::Tensor;

/// Gaussian corruption levels, on the 0-255 intensity scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    Fixed { sigma: f64 },
    /// One sigma per band, uniform in `[lo, hi]`.
    Blind { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn fixed(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            mode: NoiseMode::Fixed { sigma },
            seed,
        }
    }

    pub fn blind(lo: f64, hi: f64, seed: u64) -> Self {
        NoiseSpec {
            mode: NoiseMode::Blind { lo, hi },
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            NoiseMode::Fixed { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(HsiError::InvalidNoise(format!("sigma {sigma} must be finite and >= 0")))
            }
            NoiseMode::Blind { lo, hi } if !(lo >= 0.0 && lo <= hi && hi.is_finite()) => {
                Err(HsiError::InvalidNoise(format!("blind range [{lo}, {hi}] must satisfy 0 <= lo <= hi")))
            }
            _ => Ok(()),
        }
    }

    /// Per-band sigma on the 0-255 scale.
    pub fn band_sigmas(&self, bands: usize) -> Vec<f64> {
        match self.mode {
            NoiseMode::Fixed { sigma } => vec![sigma; bands],
            NoiseMode::Blind { lo, hi } => {
                let rng = CounterRng::new(self.seed, stream::BAND_SIGMA);
                (0..bands as u64).map(|b| lo + (hi - lo) * rng.uniform(b)).collect()
            }
        }
    }

    /// Short label used in reports, e.g. `sigma=30` or `blind[10,70]`.
    pub fn label(&self) -> String {
        match self.mode {
            NoiseMode::Fixed { sigma } => format!("sigma={sigma}"),
            NoiseMode::Blind { lo, hi } => format!("blind[{lo},{hi}]"),
        }
    }
}

/// Ground-truth noise standard deviation per voxel on the `[0, 1]` data
/// scale. Constant within each band.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaMap {
    height: usize,
    width: usize,
    per_band: Vec<f64>,
}

impl SigmaMap {
    pub fn new(height: usize, width: usize, per_band: Vec<f64>) -> Self {
        SigmaMap {
            height,
            width,
            per_band,
        }
    }

    pub fn bands(&self) -> usize {
        self.per_band.len()
    }

    pub fn band_sigma(&self, b: usize) -> f64 {
        self.per_band[b]
    }

    pub fn per_band(&self) -> &[f64] {
        &self.per_band
    }

    pub fn to_tensor(&self) -> Tensor {
        let plane = self.height * self.width;
        Tensor::from_fn(&[self.bands(), self.height, self.width], |i| self.per_band[i / plane])
    }

    pub fn to_cube(&self) -> HsiCube {
        let plane = self.height * self.width;
        let data = self
            .per_band
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s as f32, plane))
            .collect();
        HsiCube::new(self.bands(), self.height, self.width, data).expect("map dims are valid")
    }
}

/// Adds zero-mean Gaussian noise with std `sigma_b / 255` to every voxel of
/// band `b`. The noisy cube is not clipped.
pub fn add_awgn(cube: &HsiCube, spec: &NoiseSpec) -> Result<(HsiCube, SigmaMap)> {
    spec.validate()?;
    let (bands, h, w) = cube.dims();
    let plane = h * w;
    let sigmas: Vec<f64> = spec.band_sigmas(bands).into_iter().map(|s| s / 255.0).collect();
    let rng = CounterRng::new(spec.seed, stream::NOISE);
    let data = cube
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| (f64::from(v) + sigmas[i / plane] * rng.gaussian(i as u64)) as f32)
        .collect();
    let noisy = HsiCube::new(bands, h, w, data)?;
    Ok((noisy, SigmaMap::new(h, w, sigmas)))
}
