//! Hyperspectral cubes: container, file formats, synthesis and corruption.

mod io;
mod noise;
pub mod rng;
mod synth;

pub use io::{export_band_pgm, load_cube, read_cube, save_cube, write_band_pgm, write_cube, HSIF_MAGIC, HSIF_VERSION};
pub use noise::{add_awgn, NoiseMode, NoiseSpec, SigmaMap};
pub use synth::{extract_patches, synth_cube};

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum HsiError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported HSIF version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("dimensions {bands}x{height}x{width} overflow or are zero")]
    DimensionOverflow { bands: u64, height: u64, width: u64 },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("band {band} out of range for a {bands}-band cube")]
    BandOutOfRange { band: usize, bands: usize },
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
}

pub type Result<T> = std::result::Result<T, HsiError>;

/// A `bands x height x width` cube stored band-major, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    bands: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(bands: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if bands == 0 || height == 0 || width == 0 {
            return Err(HsiError::Dimension(format!(
                "cube dimensions must be positive, got {bands}x{height}x{width}"
            )));
        }
        if data.len() != bands * height * width {
            return Err(HsiError::Dimension(format!(
                "{bands}x{height}x{width} cube needs {} values, got {}",
                bands * height * width,
                data.len()
            )));
        }
        Ok(HsiCube {
            bands,
            height,
            width,
            data,
        })
    }

    pub fn filled(bands: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(bands, height, width, vec![value; bands * height * width])
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.bands, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[b * plane..(b + 1) * plane]
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> f32 {
        self.data[(b * self.height + y) * self.width + x]
    }

    pub fn value_range(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Copies bands `start..start+count`.
    pub fn band_range(&self, start: usize, count: usize) -> Result<HsiCube> {
        if count == 0 || start + count > self.bands {
            return Err(HsiError::Dimension(format!(
                "bands {start}..{} outside a {}-band cube",
                start + count,
                self.bands
            )));
        }
        let plane = self.height * self.width;
        HsiCube::new(
            count,
            self.height,
            self.width,
            self.data[start * plane..(start + count) * plane].to_vec(),
        )
    }

    /// Min-max rescale into `[0, 1]`. Cubes already inside `[0, 1]` are
    /// returned unchanged; a constant cube maps to 0.5.
    pub fn normalized_unit(&self) -> HsiCube {
        let (lo, hi) = self.value_range();
        if lo >= 0.0 && hi <= 1.0 {
            return self.clone();
        }
        let span = hi - lo;
        let data = self
            .data
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.5 })
            .collect();
        HsiCube { data, ..*self }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.bands, self.height, self.width],
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("cube dims are valid tensor dims")
    }

    /// Builds a cube from a `[B,H,W]` tensor, rounding to `f32`.
    pub fn from_tensor(t: &Tensor) -> Result<HsiCube> {
        let &[b, h, w] = t.shape() else {
            return Err(HsiError::Dimension(format!("expected a [B,H,W] tensor, got {:?}", t.shape())));
        };
        HsiCube::new(b, h, w, t.data().iter().map(|&v| v as f32).collect())
    }
}
