use super::rng::{stream, CounterRng};
use super::{HsiCube, HsiError, Result};

const COMPONENTS: usize = 4;

/// Smooth synthetic reflectance cube.
///
/// A sum of four separable low-frequency sinusoid products whose amplitudes
/// drift slowly across bands, affinely mapped onto `[0.05, 0.95]`.
pub fn synth_cube(seed: u64, bands: usize, height: usize, width: usize) -> Result<HsiCube> {
    if bands == 0 || height == 0 || width == 0 {
        return Err(HsiError::Dimension(format!(
            "cube dimensions must be positive, got {bands}x{height}x{width}"
        )));
    }
    let rng = CounterRng::new(seed, stream::SYNTH);
    let mut draw = {
        let mut counter = 0u64;
        move |lo: f64, hi: f64| {
            let v = lo + (hi - lo) * rng.uniform(counter);
            counter += 1;
            v
        }
    };
    struct Component {
        fy: f64,
        py: f64,
        fx: f64,
        px: f64,
        base: f64,
        swing: f64,
        rate: f64,
        phase: f64,
    }
    let tau = std::f64::consts::TAU;
    let comps: Vec<Component> = (0..COMPONENTS)
        .map(|_| Component {
            fy: draw(0.3, 2.5),
            py: draw(0.0, tau),
            fx: draw(0.3, 2.5),
            px: draw(0.0, tau),
            base: draw(0.5, 1.0),
            swing: draw(0.0, 0.5),
            rate: draw(0.1, 0.6),
            phase: draw(0.0, tau),
        })
        .collect();

    let (hf, wf, bf) = (height as f64, width as f64, bands as f64);
    let mut raw = Vec::with_capacity(bands * height * width);
    for b in 0..bands {
        let t = b as f64 / bf;
        let amps: Vec<f64> = comps
            .iter()
            .map(|c| c.base + c.swing * (std::f64::consts::PI * c.rate * t * 2.0 + c.phase).cos())
            .collect();
        for y in 0..height {
            for x in 0..width {
                let v: f64 = comps
                    .iter()
                    .zip(&amps)
                    .map(|(c, a)| {
                        a * (tau * c.fy * y as f64 / hf + c.py).sin() * (tau * c.fx * x as f64 / wf + c.px).sin()
                    })
                    .sum();
                raw.push(v);
            }
        }
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let data = raw
        .into_iter()
        .map(|v| {
            let u = if span > 0.0 { (v - lo) / span } else { 0.5 };
            ((0.05 + 0.9 * u) as f32).clamp(0.05, 0.95)
        })
        .collect();
    HsiCube::new(bands, height, width, data)
}

/// Square `size x size` patches (all bands) in row-major order.
pub fn extract_patches(cube: &HsiCube, size: usize, stride: usize) -> Result<Vec<HsiCube>> {
    let (bands, h, w) = cube.dims();
    if size == 0 || size > h || size > w {
        return Err(HsiError::Dimension(format!(
            "patch size {size} does not fit a {h}x{w} cube"
        )));
    }
    if stride == 0 {
        return Err(HsiError::Dimension("patch stride must be at least 1".into()));
    }
    let rows = (h - size) / stride + 1;
    let cols = (w - size) / stride + 1;
    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (y0, x0) = (r * stride, c * stride);
            let mut data = Vec::with_capacity(bands * size * size);
            for b in 0..bands {
                for y in y0..y0 + size {
                    let row = (b * h + y) * w;
                    data.extend_from_slice(&cube.data()[row + x0..row + x0 + size]);
                }
            }
            patches.push(HsiCube::new(bands, size, size, data)?);
        }
    }
    Ok(patches)
}
