//! Whole-cube inference: spatial padding and spectral windowing around
//! [`MsdNet::run`].

use thiserror::Error;

use crate::hsi::{HsiCube, HsiError};
use crate::model::MsdNet;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("cube has {cube} bands but the model needs windows of {window}")]
    Bands { cube: usize, window: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Hsi(#[from] HsiError),
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Start bands of the spectral windows covering `bands` with width `window`.
pub fn spectral_windows(bands: usize, window: usize) -> Vec<usize> {
    if window == 0 || bands < window {
        return Vec::new();
    }
    let stride = (window / 2).max(1);
    let mut starts: Vec<usize> = (0..=bands - window).step_by(stride).collect();
    if starts.last() != Some(&(bands - window)) {
        starts.push(bands - window);
    }
    starts
}

fn pad_reflect(x: &Tensor, ph: usize, pw: usize) -> Tensor {
    let &[b, h, w] = x.shape() else { unreachable!("cube tensors are rank 3") };
    let (oh, ow) = (h + ph, w + pw);
    let d = x.data();
    Tensor::from_fn(&[b, oh, ow], |i| {
        let (c, y, xx) = (i / (oh * ow), (i / ow) % oh, i % ow);
        d[(c * h + reflect(y, h)) * w + reflect(xx, w)]
    })
}

fn crop(x: &Tensor, h: usize, w: usize) -> Tensor {
    let &[b, oh, ow] = x.shape() else { unreachable!("cube tensors are rank 3") };
    let d = x.data();
    Tensor::from_fn(&[b, h, w], |i| {
        let (c, y, xx) = (i / (h * w), (i / w) % h, i % w);
        d[(c * oh + y) * ow + xx]
    })
}

/// Runs the model on one `[B,H,W]` block of any spatial size.
fn run_padded(model: &MsdNet, x: &Tensor) -> Result<(Tensor, Tensor), DenoiseError> {
    let &[_, h, w] = x.shape() else { unreachable!("cube tensors are rank 3") };
    let (ph, pw) = ((4 - h % 4) % 4, (4 - w % 4) % 4);
    if ph == 0 && pw == 0 {
        return Ok(model.run(x)?);
    }
    let (d, s) = model.run(&pad_reflect(x, ph, pw))?;
    Ok((crop(&d, h, w), crop(&s, h, w)))
}

/// Denoises a cube of any size; returns `(denoised, estimated sigma map)`.
///
/// Spatial dims are reflection-padded to multiples of 4 and cropped back.
/// When the cube has more bands than the model, overlapping windows of the
/// model's band count (stride `max(B/2, 1)`) are denoised separately and
/// averaged per band.
pub fn denoise_cube_with_sigma(cube: &HsiCube, model: &MsdNet) -> Result<(HsiCube, HsiCube), DenoiseError> {
    let window = model.bands();
    let (bands, h, w) = cube.dims();
    let starts = spectral_windows(bands, window);
    if starts.is_empty() {
        return Err(DenoiseError::Bands { cube: bands, window });
    }
    if starts.len() == 1 {
        let (d, s) = run_padded(model, &cube.to_tensor())?;
        return Ok((HsiCube::from_tensor(&d)?, HsiCube::from_tensor(&s)?));
    }
    let plane = h * w;
    let mut den = vec![0.0f64; bands * plane];
    let mut sig = vec![0.0f64; bands * plane];
    let mut count = vec![0usize; bands];
    for &start in &starts {
        let sub = cube.band_range(start, window)?;
        let (d, s) = run_padded(model, &sub.to_tensor())?;
        let off = start * plane;
        for (acc, v) in den[off..off + window * plane].iter_mut().zip(d.data()) {
            *acc += v;
        }
        for (acc, v) in sig[off..off + window * plane].iter_mut().zip(s.data()) {
            *acc += v;
        }
        for c in &mut count[start..start + window] {
            *c += 1;
        }
    }
    let avg = |acc: Vec<f64>| -> Vec<f32> {
        acc.iter()
            .enumerate()
            .map(|(i, v)| (v / count[i / plane] as f64) as f32)
            .collect()
    };
    Ok((HsiCube::new(bands, h, w, avg(den))?, HsiCube::new(bands, h, w, avg(sig))?))
}

pub fn denoise_cube(cube: &HsiCube, model: &MsdNet) -> Result<HsiCube, DenoiseError> {
    denoise_cube_with_sigma(cube, model).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_arithmetic() {
        assert_eq!(spectral_windows(5, 3), vec![0, 1, 2]);
        assert_eq!(spectral_windows(3, 3), vec![0]);
        assert_eq!(spectral_windows(10, 4), vec![0, 2, 4, 6]);
        assert_eq!(spectral_windows(11, 4), vec![0, 2, 4, 6, 7]);
        assert_eq!(spectral_windows(4, 1), vec![0, 1, 2, 3]);
        assert!(spectral_windows(2, 3).is_empty());
    }

    #[test]
    fn reflection_indices() {
        let got: Vec<usize> = (0..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect(3, 1), 0);
        assert_eq!(reflect(3, 2), 1);
    }

    #[test]
    fn pad_then_crop_is_identity() {
        let x = Tensor::from_fn(&[2, 5, 7], |i| i as f64);
        let p = pad_reflect(&x, 3, 1);
        assert_eq!(p.shape(), &[2, 8, 8]);
        assert_eq!(crop(&p, 5, 7), x);
        // row 5 mirrors row 3
        assert_eq!(p.data()[5 * 8], x.data()[3 * 7]);
    }
}
