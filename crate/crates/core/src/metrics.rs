//! Band-averaged PSNR and SSIM, spectral angle, and the evaluation report.

use std::fmt::Write as _;

use thiserror::Error;

use crate::denoise::{denoise_cube, DenoiseError};
use crate::hsi::{add_awgn, HsiCube, HsiError, NoiseSpec};
use crate::model::MsdNet;

/// Reported for bands (and cubes) that match exactly.
pub const PSNR_IDENTICAL_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize, usize), (usize, usize, usize)),
    #[error("{h}x{w} bands are smaller than the {window}x{window} SSIM window")]
    TooSmall { h: usize, w: usize, window: usize },
    #[error("SAM needs at least 2 bands, got {0}")]
    TooFewBands(usize),
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
    #[error(transparent)]
    Hsi(#[from] HsiError),
}

type Result<T> = std::result::Result<T, MetricsError>;

fn check_shapes(a: &HsiCube, b: &HsiCube) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(MetricsError::Shape(a.dims(), b.dims()));
    }
    Ok(())
}

/// Mean over bands of `10 log10(1 / MSE_b)` with data range 1; each band is
/// capped at [`PSNR_IDENTICAL_DB`].
pub fn psnr(reference: &HsiCube, test: &HsiCube) -> Result<f64> {
    check_shapes(reference, test)?;
    let bands = reference.bands();
    let total: f64 = (0..bands)
        .map(|b| {
            let (r, t) = (reference.band(b), test.band(b));
            let sse: f64 = r
                .iter()
                .zip(t)
                .map(|(&x, &y)| {
                    let d = f64::from(x) - f64::from(y);
                    d * d
                })
                .sum();
            let mse = sse / r.len() as f64;
            if mse == 0.0 {
                PSNR_IDENTICAL_DB
            } else {
                (-10.0 * mse.log10()).min(PSNR_IDENTICAL_DB)
            }
        })
        .sum();
    Ok(total / bands as f64)
}

/// Normalised 1-D Gaussian taps of the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable Gaussian filter over an `h x w` plane, valid positions only.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let k = SSIM_WINDOW;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &x[y * w..(y + 1) * w];
        for ox in 0..ow {
            rows[y * ow + ox] = taps.iter().zip(&src[ox..ox + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(oy + i) * ow + ox])
                .sum();
        }
    }
    out
}

fn ssim_band(a: &[f32], b: &[f32], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let x: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mu1 = filter_valid(&x, h, w, taps);
    let mu2 = filter_valid(&y, h, w, taps);
    let exx = filter_valid(&xx, h, w, taps);
    let eyy = filter_valid(&yy, h, w, taps);
    let exy = filter_valid(&xy, h, w, taps);
    let n = mu1.len();
    let mut total = 0.0;
    for i in 0..n {
        let (m1, m2) = (mu1[i], mu2[i]);
        let s1 = exx[i] - m1 * m1;
        let s2 = eyy[i] - m2 * m2;
        let s12 = exy[i] - m1 * m2;
        let num = (2.0 * m1 * m2 + c1) * (2.0 * s12 + c2);
        let den = (m1 * m1 + m2 * m2 + c1) * (s1 + s2 + c2);
        total += num / den;
    }
    total / n as f64
}

/// Mean over bands of the standard SSIM (11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, data range 1, valid window positions).
pub fn ssim(reference: &HsiCube, test: &HsiCube) -> Result<f64> {
    check_shapes(reference, test)?;
    let (bands, h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            h,
            w,
            window: SSIM_WINDOW,
        });
    }
    let taps = gaussian_taps();
    let total: f64 = (0..bands)
        .map(|b| ssim_band(reference.band(b), test.band(b), h, w, &taps))
        .sum();
    Ok(total / bands as f64)
}

/// Mean spectral angle in radians. Pixels where either spectrum has norm
/// below 1e-12 contribute 0.
pub fn sam(reference: &HsiCube, test: &HsiCube) -> Result<f64> {
    check_shapes(reference, test)?;
    let (bands, h, w) = reference.dims();
    if bands < 2 {
        return Err(MetricsError::TooFewBands(bands));
    }
    let plane = h * w;
    let (r, t) = (reference.data(), test.data());
    let mut total = 0.0;
    for p in 0..plane {
        let (mut dot, mut nr, mut nt) = (0.0, 0.0, 0.0);
        for b in 0..bands {
            let (x, y) = (f64::from(r[b * plane + p]), f64::from(t[b * plane + p]));
            dot += x * y;
            nr += x * x;
            nt += y * y;
        }
        let (nr, nt) = (nr.sqrt(), nt.sqrt());
        if nr < 1e-12 || nt < 1e-12 {
            continue;
        }
        total += (dot / (nr * nt)).clamp(-1.0, 1.0).acos();
    }
    Ok(total / plane as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub psnr: f64,
    pub ssim: f64,
    /// `None` for single-band cubes.
    pub sam: Option<f64>,
}

impl Scores {
    pub fn compute(reference: &HsiCube, test: &HsiCube) -> Result<Scores> {
        Ok(Scores {
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            sam: if reference.bands() >= 2 {
                Some(sam(reference, test)?)
            } else {
                None
            },
        })
    }

    fn get(&self, index: Index) -> Option<f64> {
        match index {
            Index::Psnr => Some(self.psnr),
            Index::Ssim => Some(self.ssim),
            Index::Sam => self.sam,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Index {
    Psnr,
    Ssim,
    Sam,
}

impl Index {
    pub const ALL: [Index; 3] = [Index::Psnr, Index::Ssim, Index::Sam];

    pub fn name(self) -> &'static str {
        match self {
            Index::Psnr => "PSNR",
            Index::Ssim => "SSIM",
            Index::Sam => "SAM",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub noise: String,
    /// Scores per method, in [`MetricsReport::methods`] order.
    pub scores: Vec<Scores>,
}

/// Noise setting x index table, one column per method.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub methods: Vec<String>,
    pub rows: Vec<ReportRow>,
}

fn fmt_value(v: Option<f64>, prec: usize) -> String {
    match v {
        Some(v) => format!("{v:.prec$}"),
        None => "NA".into(),
    }
}

impl MetricsReport {
    /// Score of `method` for the row labelled `noise`.
    pub fn get(&self, noise: &str, method: &str, index: Index) -> Option<f64> {
        let m = self.methods.iter().position(|x| x == method)?;
        let row = self.rows.iter().find(|r| r.noise == noise)?;
        row.scores[m].get(index)
    }

    /// CSV with header `noise,index,method,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("noise,index,method,value\n");
        for row in &self.rows {
            for index in Index::ALL {
                for (m, method) in self.methods.iter().enumerate() {
                    let _ = writeln!(s, "{},{},{},{}", row.noise, index.name(), method, fmt_value(row.scores[m].get(index), 6));
                }
            }
        }
        s
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let noise_w = self.rows.iter().map(|r| r.noise.len()).max().unwrap_or(5).max(5);
        let col_w = self.methods.iter().map(String::len).max().unwrap_or(8).max(8);
        let mut s = format!("{:<noise_w$}  {:<5}", "Noise", "Index");
        for m in &self.methods {
            let _ = write!(s, "  {m:>col_w$}");
        }
        s.push('\n');
        for row in &self.rows {
            for (i, index) in Index::ALL.into_iter().enumerate() {
                let label = if i == 0 { row.noise.as_str() } else { "" };
                let _ = write!(s, "{label:<noise_w$}  {:<5}", index.name());
                let prec = if index == Index::Psnr { 2 } else { 3 };
                for sc in &row.scores {
                    let _ = write!(s, "  {:>col_w$}", fmt_value(sc.get(index), prec));
                }
                s.push('\n');
            }
        }
        s
    }
}

pub const METHOD_NOISY: &str = "Noisy";
pub const METHOD_DENOISED: &str = "Denoised";

/// Corrupts `clean` under each setting, denoises with `model`, and scores
/// both the noisy and the denoised cube against `clean`.
pub fn evaluate(clean: &HsiCube, model: &MsdNet, settings: &[NoiseSpec]) -> Result<MetricsReport> {
    let mut rows = Vec::with_capacity(settings.len());
    for spec in settings {
        let (noisy, _) = add_awgn(clean, spec)?;
        let denoised = denoise_cube(&noisy, model)?;
        rows.push(ReportRow {
            noise: spec.label(),
            scores: vec![Scores::compute(clean, &noisy)?, Scores::compute(clean, &denoised)?],
        });
    }
    Ok(MetricsReport {
        methods: vec![METHOD_NOISY.into(), METHOD_DENOISED.into()],
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_of_constant_offset() {
        let a = HsiCube::filled(2, 4, 4, 0.3).unwrap();
        let b = HsiCube::filled(2, 4, 4, 0.4).unwrap();
        // f32 storage of 0.3/0.4 leaves the offset a few ulps from 0.1
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL_DB);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let a = HsiCube::filled(1, 12, 12, 0.5).unwrap();
        let b = HsiCube::filled(1, 12, 12, 0.6).unwrap();
        let (m1, m2) = (0.5f64, f64::from(0.6f32));
        let c1 = 1e-4;
        let expected = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!((got - 0.98361).abs() < 1e-4);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = HsiCube::filled(1, 10, 12, 0.5).unwrap();
        assert!(matches!(ssim(&a, &a), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn sam_orthogonal_and_degenerate() {
        let r = HsiCube::new(2, 1, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let t = HsiCube::new(2, 1, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((sam(&r, &t).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let zero = HsiCube::filled(2, 1, 2, 0.0).unwrap();
        assert_eq!(sam(&r, &zero).unwrap(), 0.0);
        assert!(matches!(
            sam(&HsiCube::filled(1, 2, 2, 0.5).unwrap(), &HsiCube::filled(1, 2, 2, 0.5).unwrap()),
            Err(MetricsError::TooFewBands(1))
        ));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = HsiCube::filled(2, 12, 12, 0.5).unwrap();
        let b = HsiCube::filled(2, 12, 11, 0.5).unwrap();
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
        assert!(sam(&a, &b).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = Scores {
            psnr: 18.5,
            ssim: 0.2,
            sam: Some(0.9),
        };
        let report = MetricsReport {
            methods: vec!["Noisy".into(), "Denoised".into()],
            rows: vec![
                ReportRow {
                    noise: "sigma=30".into(),
                    scores: vec![s, s],
                },
                ReportRow {
                    noise: "blind[10,70]".into(),
                    scores: vec![s, s],
                },
            ],
        };
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 3 * 2);
        assert!(csv.contains("sigma=30,PSNR,Noisy,18.500000"));
        assert_eq!(report.get("blind[10,70]", "Denoised", Index::Sam), Some(0.9));
        assert!(report.to_text().lines().count() == 7);
    }
}
