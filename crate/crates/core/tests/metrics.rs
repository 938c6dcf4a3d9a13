mod common;

use std::f64::consts::FRAC_PI_2;

use common::{direct_ssim_band, rng, uniform_vec};
use msdnet::hsi::{add_awgn, synth_cube, HsiCube, NoiseSpec};
use msdnet::metrics::{evaluate, psnr, sam, ssim, Index, Scores, METHOD_DENOISED, METHOD_NOISY, PSNR_IDENTICAL_DB};
use msdnet::model::{ModelConfig, MsdNet};
use proptest::prelude::*;

fn random_cube(seed: u64, b: usize, h: usize, w: usize) -> HsiCube {
    let data = uniform_vec(&mut rng(seed), b * h * w, 0.0, 1.0);
    HsiCube::new(b, h, w, data.into_iter().map(|v| v as f32).collect()).unwrap()
}

fn band_f64(c: &HsiCube, b: usize) -> Vec<f64> {
    c.band(b).iter().map(|&v| f64::from(v)).collect()
}

#[test]
fn psnr_examples() {
    let a = HsiCube::filled(3, 8, 8, 0.25).unwrap();
    let b = HsiCube::filled(3, 8, 8, 0.375).unwrap();
    // dyadic values: MSE is exactly 1/64
    let expect = 10.0 * 64f64.log10();
    assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-12);
    let c = HsiCube::filled(3, 8, 8, 0.35).unwrap();
    assert!((psnr(&a, &c).unwrap() - 20.0).abs() < 1e-5);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL_DB);
}

#[test]
fn psnr_averages_per_band_values() {
    let mut b = HsiCube::filled(2, 4, 4, 0.5).unwrap();
    let a = b.clone();
    b.data_mut()[..16].fill(0.75);
    // band 0 at 1/16 MSE, band 1 identical
    let expect = (10.0 * 16f64.log10() + PSNR_IDENTICAL_DB) / 2.0;
    assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn ssim_matches_direct_window_sum() {
    for (seed, b, h, w) in [(0, 2, 16, 16), (1, 1, 11, 11), (2, 3, 13, 20)] {
        let x = random_cube(seed, b, h, w);
        let (noisy, _) = add_awgn(&x, &NoiseSpec::fixed(40.0, seed)).unwrap();
        let direct: f64 = (0..b)
            .map(|k| direct_ssim_band(&band_f64(&x, k), &band_f64(&noisy, k), h, w))
            .sum::<f64>()
            / b as f64;
        let got = ssim(&x, &noisy).unwrap();
        assert!((got - direct).abs() < 1e-6, "{got} vs {direct}");
    }
}

#[test]
fn ssim_constant_images() {
    let a = HsiCube::filled(1, 16, 16, 0.5).unwrap();
    let b = HsiCube::filled(1, 16, 16, 0.6).unwrap();
    let got = ssim(&a, &b).unwrap();
    let direct = direct_ssim_band(&band_f64(&a, 0), &band_f64(&b, 0), 16, 16);
    assert!((got - direct).abs() < 1e-9);
    assert!((got - 0.98361).abs() < 1e-4, "{got}");
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn sam_examples() {
    let r = HsiCube::new(2, 1, 1, vec![1.0, 0.0]).unwrap();
    let t = HsiCube::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
    assert!((sam(&r, &t).unwrap() - FRAC_PI_2).abs() < 1e-12);
    let diag = HsiCube::new(2, 1, 1, vec![1.0, 1.0]).unwrap();
    assert!((sam(&r, &diag).unwrap() - FRAC_PI_2 / 2.0).abs() < 1e-7);
    let opposite = HsiCube::new(2, 1, 1, vec![-1.0, 0.0]).unwrap();
    assert!((sam(&r, &opposite).unwrap() - 2.0 * FRAC_PI_2).abs() < 1e-12);
}

#[test]
fn sam_ignores_per_pixel_scale() {
    let a = random_cube(5, 4, 6, 6);
    let mut scaled = a.clone();
    let plane = 36;
    for b in 0..4 {
        for p in 0..plane {
            scaled.data_mut()[b * plane + p] *= 0.5 + p as f32 * 0.25;
        }
    }
    assert!(sam(&a, &scaled).unwrap() < 1e-3);
}

#[test]
fn noisier_cubes_score_worse() {
    let clean = synth_cube(3, 4, 32, 32).unwrap();
    let scores: Vec<Scores> = [10.0, 30.0, 50.0, 70.0]
        .iter()
        .map(|&s| Scores::compute(&clean, &add_awgn(&clean, &NoiseSpec::fixed(s, 2)).unwrap().0).unwrap())
        .collect();
    for w in scores.windows(2) {
        assert!(w[1].psnr < w[0].psnr);
        assert!(w[1].ssim < w[0].ssim);
        assert!(w[1].sam.unwrap() > w[0].sam.unwrap());
    }
}

#[test]
fn evaluate_with_identity_model() {
    let clean = synth_cube(1, 4, 16, 16).unwrap();
    let model = MsdNet::zeroed(ModelConfig::micro(2));
    let settings = [NoiseSpec::fixed(30.0, 1), NoiseSpec::fixed(50.0, 2), NoiseSpec::blind(10.0, 70.0, 3)];
    let report = evaluate(&clean, &model, &settings).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.methods, vec![METHOD_NOISY, METHOD_DENOISED]);
    for (row, spec) in report.rows.iter().zip(&settings) {
        assert_eq!(row.scores[0], row.scores[1]);
        let (noisy, _) = add_awgn(&clean, spec).unwrap();
        assert_eq!(row.scores[0], Scores::compute(&clean, &noisy).unwrap());
        assert_eq!(report.get(&row.noise, METHOD_NOISY, Index::Psnr), Some(row.scores[0].psnr));
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 1 + 3 * 3 * 2);
    assert_eq!(csv.lines().next().unwrap(), "noise,index,method,value");
    assert_eq!(evaluate(&clean, &model, &settings).unwrap().to_csv(), csv);
}

#[test]
fn single_band_reports_na_for_sam() {
    let clean = synth_cube(1, 1, 16, 16).unwrap();
    let model = MsdNet::zeroed(ModelConfig::micro(1));
    let report = evaluate(&clean, &model, &[NoiseSpec::fixed(30.0, 0)]).unwrap();
    assert!(report.to_csv().contains("SAM,Noisy,NA"));
    assert_eq!(report.get("sigma=30", METHOD_NOISY, Index::Sam), None);
}

fn cube_pair() -> impl Strategy<Value = (HsiCube, HsiCube)> {
    (1usize..4, 11usize..15, 11usize..15).prop_flat_map(|(b, h, w)| {
        let n = b * h * w;
        (prop::collection::vec(0.0f32..1.0, n), prop::collection::vec(0.0f32..1.0, n)).prop_map(move |(x, y)| {
            (HsiCube::new(b, h, w, x).unwrap(), HsiCube::new(b, h, w, y).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_are_symmetric((a, b) in cube_pair()) {
        prop_assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        if a.bands() >= 2 {
            prop_assert!((sam(&a, &b).unwrap() - sam(&b, &a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn self_comparison_is_perfect((a, _) in cube_pair()) {
        prop_assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL_DB);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        if a.bands() >= 2 {
            prop_assert!(sam(&a, &a).unwrap() < 1e-6);
        }
    }

    #[test]
    fn metric_ranges((a, b) in cube_pair()) {
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!(psnr(&a, &b).unwrap() <= PSNR_IDENTICAL_DB);
        if a.bands() >= 2 {
            let angle = sam(&a, &b).unwrap();
            prop_assert!((0.0..=FRAC_PI_2 + 1e-12).contains(&angle));
        }
    }
}
