//! Self-checks behind `msdnet verify`: finite-difference gradient checks of
//! every differentiable operation and of the whole model, plus brute-force
//! oracle comparisons for convolution, SSIM, Adam and the losses.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hsi::HsiCube;
use crate::losses::{total_loss, ConvFeatureExtractor, FeatureExtractor, LossWeights};
use crate::metrics::{gaussian_taps, ssim, SSIM_K1, SSIM_K2, SSIM_WINDOW};
use crate::model::{ModelConfig, MsdNet};
use crate::nn::ParamStore;
use crate::tensor::{
    conv2d_forward, gradient_check_with, Fault, GradCheckOptions, Stencil, Padding, PoolMode, Result, Tape, Tensor, Var,
};
use crate::train::{adam_step, AdamConfig, AdamState, WeightDecayMode};

pub const GRAD_THRESHOLD: f64 = 1e-4;
pub const CONV_ORACLE_THRESHOLD: f64 = 1e-6;
pub const SSIM_ORACLE_THRESHOLD: f64 = 1e-6;
pub const ADAM_ORACLE_THRESHOLD: f64 = 1e-10;
pub const LOSS_ORACLE_THRESHOLD: f64 = 1e-10;

/// Finite-difference step of the gradient suite.
const GRAD_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Grads,
    Oracles,
    All,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grads" => Ok(Suite::Grads),
            "oracles" => Ok(Suite::Oracles),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite `{s}` (grads, oracles, all)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seeds: u64,
    /// Corrupts the backward pass of the analytic gradients.
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seeds: 20, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Worst value over every seed.
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value < self.threshold
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One `name value threshold PASS|FAIL` line per check.
    pub fn to_text(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<w$}  {:>10.3e}  < {:<8.1e}  {}",
                c.name,
                c.value,
                c.threshold,
                if c.passed() { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Grads | Suite::All) {
        checks.extend(gradient_suite(opts));
    }
    if matches!(suite, Suite::Oracles | Suite::All) {
        checks.extend(oracle_suite(opts.seeds));
    }
    VerifyReport { checks }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values in `±[0.1, 1]`, keeping finite differences off ReLU/max kinks at 0.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.1..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Reduces `out` to a scalar through fixed random weights so every output
/// element carries a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let wv = tape.leaf(weights.clone().reshape(tape.shape(out).to_vec())?);
    let p = tape.mul(out, wv)?;
    Ok(tape.sum(p))
}

type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

struct GradCase {
    inputs: Vec<Tensor>,
    f: OpFn,
    coords: Option<usize>,
}

fn case(inputs: Vec<Tensor>, out_numel: usize, rng: &mut ChaCha8Rng, op: impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'static) -> GradCase {
    let weights = rand_tensor(rng, &[out_numel]);
    GradCase {
        inputs,
        f: Box::new(move |t, v| {
            let out = op(t, v)?;
            weighted_sum(t, out, &weights)
        }),
        coords: None,
    }
}

fn op_case(name: &str, rng: &mut ChaCha8Rng) -> GradCase {
    let c = rng.gen_range(1..=3);
    let h = 2 * rng.gen_range(2..=4);
    let w = 2 * rng.gen_range(2..=4);
    match name {
        "conv2d/same" | "conv2d/valid" | "conv2d/stride2" | "conv2d/batched" => {
            let k = [1, 3, 5][rng.gen_range(0..3)];
            let cout = rng.gen_range(1..=3);
            let (stride, padding) = match name {
                "conv2d/valid" => (1, Padding::Valid),
                "conv2d/stride2" => (2, Padding::Same),
                _ => (1, Padding::Same),
            };
            let (hh, ww) = (h.max(k), w.max(k));
            let xshape: Vec<usize> = if name == "conv2d/batched" { vec![2, c, hh, ww] } else { vec![c, hh, ww] };
            let x = rand_tensor(rng, &xshape);
            let wt = rand_tensor(rng, &[cout, c, k, k]);
            let b = rand_tensor(rng, &[cout]);
            let out = conv2d_forward(&x, &wt, &b, stride, padding).expect("valid conv case");
            case(vec![x, wt, b], out.numel(), rng, move |t, v| t.conv2d(v[0], v[1], v[2], stride, padding))
        }
        "relu" => {
            let x = rand_away_from_zero(rng, &[c, h, w]);
            case(vec![x], c * h * w, rng, |t, v| Ok(t.relu(v[0])))
        }
        "sigmoid" => {
            let x = Tensor::from_fn(&[c, h, w], |_| rng.gen_range(-4.0..4.0));
            case(vec![x], c * h * w, rng, |t, v| Ok(t.sigmoid(v[0])))
        }
        "pool2d/max2x2" | "pool2d/avg2x2" => {
            let mode = if name.ends_with("max2x2") { PoolMode::Max2x2 } else { PoolMode::Avg2x2 };
            let x = rand_tensor(rng, &[c, h, w]);
            case(vec![x], c * h * w / 4, rng, move |t, v| t.pool2d(v[0], mode))
        }
        "pool2d/global_max" => {
            let x = rand_tensor(rng, &[c, h, w]);
            case(vec![x], c, rng, |t, v| t.pool2d(v[0], PoolMode::GlobalMax))
        }
        "pool2d/adaptive_avg" => {
            let bins = rng.gen_range(1..=h.min(w));
            let x = rand_tensor(rng, &[c, h, w]);
            case(vec![x], c * bins * bins, rng, move |t, v| t.pool2d(v[0], PoolMode::AdaptiveAvg(bins)))
        }
        "resize_nearest" => {
            let f = rng.gen_range(1..=3);
            let x = rand_tensor(rng, &[c, h / 2, w / 2]);
            case(vec![x], c * h / 2 * w / 2 * f * f, rng, move |t, v| t.resize_nearest(v[0], f))
        }
        "resize_nearest_to" => {
            let (sh, sw) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            let x = rand_tensor(rng, &[c, sh, sw]);
            case(vec![x], c * h * w, rng, move |t, v| t.resize_nearest_to(v[0], h, w))
        }
        "concat_channels" => {
            let c2 = rng.gen_range(1..=3);
            let a = rand_tensor(rng, &[c, h, w]);
            let b = rand_tensor(rng, &[c2, h, w]);
            case(vec![a, b], (c + c2) * h * w, rng, |t, v| t.concat_channels(&[v[0], v[1]]))
        }
        "slice_channels" => {
            let total = c + 2;
            let start = rng.gen_range(0..total);
            let len = rng.gen_range(1..=total - start);
            let x = rand_tensor(rng, &[total, h, w]);
            case(vec![x], len * h * w, rng, move |t, v| t.slice_channels(v[0], start, len))
        }
        "fully_connected" => {
            let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let x = rand_tensor(rng, &[n]);
            let wt = rand_tensor(rng, &[m, n]);
            let b = rand_tensor(rng, &[m]);
            case(vec![x, wt, b], m, rng, |t, v| t.fully_connected(v[0], v[1], v[2]))
        }
        "channel_scale" => {
            let p = rand_tensor(rng, &[c, h, w]);
            let s = rand_tensor(rng, &[c]);
            case(vec![p, s], c * h * w, rng, |t, v| t.channel_scale(v[0], v[1]))
        }
        "add" | "sub" | "mul" => {
            let a = rand_tensor(rng, &[c, h, w]);
            let b = rand_tensor(rng, &[c, h, w]);
            let op = name.to_string();
            case(vec![a, b], c * h * w, rng, move |t, v| match op.as_str() {
                "add" => t.add(v[0], v[1]),
                "sub" => t.sub(v[0], v[1]),
                _ => t.mul(v[0], v[1]),
            })
        }
        "scale" => {
            let k = rng.gen_range(-3.0..3.0);
            let x = rand_tensor(rng, &[c, h, w]);
            case(vec![x], c * h * w, rng, move |t, v| Ok(t.scale(v[0], k)))
        }
        "sum" => {
            let x = rand_tensor(rng, &[c, h, w]);
            case(vec![x], 1, rng, |t, v| Ok(t.sum(v[0])))
        }
        "reshape" => {
            let x = rand_tensor(rng, &[c, h, w]);
            case(vec![x], c * h * w, rng, move |t, v| t.reshape(v[0], &[h, c * w]))
        }
        "mse" => {
            let a = rand_tensor(rng, &[c, h, w]);
            let b = rand_tensor(rng, &[c, h, w]);
            GradCase {
                inputs: vec![a, b],
                f: Box::new(|t, v| t.mse(v[0], v[1])),
                coords: None,
            }
        }
        "asymmetric" => {
            let alpha = rng.gen_range(0.05..0.95);
            let mean = rng.gen_bool(0.5);
            let truth = rand_tensor(rng, &[c, h, w]);
            let offset = rand_away_from_zero(rng, &[c, h, w]);
            let est = Tensor::from_fn(&[c, h, w], |i| truth.data()[i] + offset.data()[i]);
            GradCase {
                inputs: vec![est, truth],
                f: Box::new(move |t, v| t.asymmetric(v[0], v[1], alpha, mean)),
                coords: None,
            }
        }
        _ => unreachable!("unknown op case {name}"),
    }
}

/// Every differentiable tape operation, by check name.
pub const OP_CHECKS: &[&str] = &[
    "conv2d/same",
    "conv2d/valid",
    "conv2d/stride2",
    "conv2d/batched",
    "relu",
    "sigmoid",
    "pool2d/max2x2",
    "pool2d/avg2x2",
    "pool2d/global_max",
    "pool2d/adaptive_avg",
    "resize_nearest",
    "resize_nearest_to",
    "concat_channels",
    "slice_channels",
    "fully_connected",
    "channel_scale",
    "add",
    "sub",
    "mul",
    "scale",
    "sum",
    "reshape",
    "mse",
    "asymmetric",
];

fn micro_model_config() -> ModelConfig {
    ModelConfig::micro(1)
}

/// Parameters plus the noisy input for the model-level cases; the closure
/// sees the parameter vars first, in registration order.
fn model_case(which: &str, rng: &mut ChaCha8Rng, seed: u64) -> GradCase {
    let cfg = micro_model_config();
    let mut model = MsdNet::new(cfg, seed);
    // zero biases put dead channels exactly on the ReLU kink
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        if model.params.name(id).ends_with(".bias") {
            for v in model.params.get_mut(id).data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let n = model.params.len();
    let y = Tensor::from_fn(&[1, 8, 8], |_| rng.gen_range(0.0..1.0));
    let mut inputs: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    inputs.push(y.clone());
    let f: OpFn = match which {
        "estimate_noise" => {
            let w = rand_tensor(rng, &[64]);
            Box::new(move |t, v| {
                let s = model.estimator.forward(t, &v[..n], v[n])?;
                weighted_sum(t, s, &w)
            })
        }
        "unet_denoise" => {
            let sigma = Tensor::from_fn(&[1, 8, 8], |_| rng.gen_range(0.0..0.3));
            let w = rand_tensor(rng, &[64]);
            Box::new(move |t, v| {
                let s = t.leaf(sigma.clone());
                let d = model.unet.denoise(t, &v[..n], v[n], s)?;
                weighted_sum(t, d, &w)
            })
        }
        _ => {
            let clean = Tensor::from_fn(&[1, 8, 8], |_| rng.gen_range(0.0..1.0));
            let truth = Tensor::from_fn(&[1, 8, 8], |_| rng.gen_range(0.0..0.3));
            let extractor = ConvFeatureExtractor::with_default_seed(1);
            let weights = LossWeights::default();
            Box::new(move |t, v| {
                let out = model.forward(t, &v[..n], v[n])?;
                let g = t.leaf(clean.clone());
                let s = t.leaf(truth.clone());
                Ok(total_loss(t, g, out.denoised, out.sigma_hat, s, &weights, &extractor)?.total)
            })
        }
    };
    GradCase {
        inputs,
        f,
        coords: Some(3),
    }
}

pub const MODEL_CHECKS: &[&str] = &["estimate_noise", "unet_denoise", "total_loss(full model)"];

fn run_grad(name: &str, seeds: u64, fault: Option<Fault>, build: impl Fn(&mut ChaCha8Rng, u64) -> GradCase) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let c = build(&mut rng, seed);
        let opts = GradCheckOptions {
            eps: GRAD_EPS,
            max_coords_per_input: c.coords,
            seed,
            step_cuts: 5,
            stencil: Stencil::FivePoint,
        };
        let new_tape = || fault.map_or_else(Tape::new, Tape::with_fault);
        let v = match gradient_check_with(&c.f, &c.inputs, &opts, &new_tape) {
            Ok(r) => r.max_rel_error,
            Err(_) => f64::INFINITY,
        };
        worst = if v.is_nan() { f64::INFINITY } else { worst.max(v) };
    }
    Check {
        name: format!("grad/{name}"),
        value: worst,
        threshold: GRAD_THRESHOLD,
    }
}

pub fn gradient_suite(opts: &VerifyOptions) -> Vec<Check> {
    let mut checks: Vec<Check> = OP_CHECKS
        .iter()
        .map(|&name| run_grad(name, opts.seeds, opts.fault, |rng, _| op_case(name, rng)))
        .collect();
    for &name in MODEL_CHECKS {
        checks.push(run_grad(name, opts.seeds, opts.fault, |rng, seed| model_case(name, rng, seed)));
    }
    checks
}

/// Direct nested-loop cross-correlation with zero padding.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: Padding) -> Vec<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, c, h, wd) = if xs.len() == 4 { (xs[0], xs[1], xs[2], xs[3]) } else { (1, xs[0], xs[1], xs[2]) };
    let (co, k) = (ws[0], ws[2]);
    let pad = if padding == Padding::Same { (k - 1) / 2 } else { 0 };
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Vec::with_capacity(n * co * oh * ow);
    for img in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xi = ((img * c + ci) * h + iy as usize) * wd + ix as usize;
                                let wi = ((o * c + ci) * k + ky) * k + kx;
                                acc += x.data()[xi] * w.data()[wi];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn conv_oracle(seeds: u64) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=4);
        let c = rng.gen_range(1..=4);
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let h = rng.gen_range(k..=9);
        let w = rng.gen_range(k..=9);
        let co = rng.gen_range(1..=4);
        let stride = rng.gen_range(1..=2);
        let padding = if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
        let shape = if seed % 2 == 0 { vec![n, c, h, w] } else { vec![c, h, w] };
        let x = rand_tensor(&mut rng, &shape);
        let wt = rand_tensor(&mut rng, &[co, c, k, k]);
        let b = rand_tensor(&mut rng, &[co]);
        let got = conv2d_forward(&x, &wt, &b, stride, padding);
        let want = naive_conv(&x, &wt, &b, stride, padding);
        let err = match got {
            Ok(t) if t.numel() == want.len() => t.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            _ => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    Check {
        name: "oracle/conv2d".into(),
        value: worst,
        threshold: CONV_ORACLE_THRESHOLD,
    }
}

/// SSIM computed window by window with the full 2-D Gaussian kernel.
fn direct_ssim(a: &HsiCube, b: &HsiCube) -> f64 {
    let g = gaussian_taps();
    let (bands, h, w) = a.dims();
    let k = SSIM_WINDOW;
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    for band in 0..bands {
        let mut acc = 0.0;
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let wgt = g[dy] * g[dx];
                        let p = f64::from(a.get(band, y0 + dy, x0 + dx));
                        let q = f64::from(b.get(band, y0 + dy, x0 + dx));
                        ma += wgt * p;
                        mb += wgt * q;
                        saa += wgt * p * p;
                        sbb += wgt * q * q;
                        sab += wgt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        total += acc / ((h - k + 1) * (w - k + 1)) as f64;
    }
    total / bands as f64
}

fn ssim_oracle(seeds: u64) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bands = rng.gen_range(1..=3);
        let h = rng.gen_range(11..=18);
        let w = rng.gen_range(11..=18);
        let n = bands * h * w;
        let a: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f32> = a.iter().map(|&v| (v + rng.gen_range(-0.3..0.3)).clamp(0.0, 1.0)).collect();
        let a = HsiCube::new(bands, h, w, a).expect("valid dims");
        let b = HsiCube::new(bands, h, w, b).expect("valid dims");
        let err = match ssim(&a, &b) {
            Ok(v) => (v - direct_ssim(&a, &b)).abs(),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    Check {
        name: "oracle/ssim".into(),
        value: worst,
        threshold: SSIM_ORACLE_THRESHOLD,
    }
}

fn adam_oracle(seeds: u64) -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = AdamConfig {
            learning_rate: rng.gen_range(1e-4..1e-2),
            weight_decay: if seed % 3 == 0 { 0.0 } else { rng.gen_range(0.0..1e-2) },
            decay_mode: if seed % 2 == 0 { WeightDecayMode::L2 } else { WeightDecayMode::Decoupled },
            ..AdamConfig::default()
        };
        let w0: f64 = rng.gen_range(-1.0..1.0);
        let mut params = ParamStore::new();
        params.add("w", Tensor::new(vec![1], vec![w0]).expect("scalar"));
        let mut state = AdamState::new(&params);
        let (mut w, mut m, mut v) = (w0, 0.0f64, 0.0f64);
        for step in 1..=50 {
            let g: f64 = rng.gen_range(-1.0..1.0);
            if adam_step(&mut params, &[vec![g]], &mut state, &cfg).is_err() {
                worst = f64::INFINITY;
                break;
            }
            let ge = if cfg.decay_mode == WeightDecayMode::L2 { g + cfg.weight_decay * w } else { g };
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * ge;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * ge * ge;
            let mh = m / (1.0 - cfg.beta1.powi(step));
            let vh = v / (1.0 - cfg.beta2.powi(step));
            let decay = if cfg.decay_mode == WeightDecayMode::Decoupled { cfg.weight_decay * w } else { 0.0 };
            w -= cfg.learning_rate * (mh / (vh.sqrt() + cfg.eps) + decay);
            let got = params.get(params.ids().next().expect("one param")).data()[0];
            worst = worst.max((got - w).abs());
        }
    }
    Check {
        name: "oracle/adam".into(),
        value: worst,
        threshold: ADAM_ORACLE_THRESHOLD,
    }
}

/// Stage features of the default extractor, recomputed with the naive
/// convolution and explicit pooling.
fn direct_features(ex: &ConvFeatureExtractor, x: &Tensor, stage: usize) -> Tensor {
    let p = ex.params();
    let get = |name: &str| p.get(p.find(name).expect("extractor parameter")).clone();
    let mut h = x.clone();
    for s in 1..=stage {
        if s > 1 {
            let &[c, hh, ww] = h.shape() else { unreachable!() };
            let d = h.data().to_vec();
            h = Tensor::from_fn(&[c, hh / 2, ww / 2], |i| {
                let (ch, y, xx) = (i / (hh / 2 * ww / 2), (i / (ww / 2)) % (hh / 2), i % (ww / 2));
                let at = |dy: usize, dx: usize| d[(ch * hh + 2 * y + dy) * ww + 2 * xx + dx];
                (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0
            });
        }
        let w = get(&format!("phi.stage{s}.weight"));
        let b = get(&format!("phi.stage{s}.bias"));
        let out = naive_conv(&h, &w, &b, 1, Padding::Same);
        let &[_, hh, ww] = h.shape() else { unreachable!() };
        h = Tensor::new(vec![w.shape()[0], hh, ww], out.into_iter().map(|v| v.max(0.0)).collect()).expect("shape");
    }
    h
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn loss_oracle(seeds: u64) -> Check {
    let mut worst: f64 = 0.0;
    let ex = ConvFeatureExtractor::with_default_seed(1);
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [1, 8, 8];
        let g = Tensor::from_fn(&shape, |_| rng.gen_range(0.0..1.0));
        let d = Tensor::from_fn(&shape, |_| rng.gen_range(0.0..1.0));
        let ne = Tensor::from_fn(&shape, |_| rng.gen_range(0.0..0.3));
        let nt = Tensor::from_fn(&shape, |_| rng.gen_range(0.0..0.3));
        let weights = LossWeights {
            alpha: rng.gen_range(0.05..0.95),
            lambda_asymm: rng.gen_range(0.0..2.0),
            perceptual_stage: rng.gen_range(1..=ex.num_stages()),
            asymm_mean: rng.gen_bool(0.5),
        };
        let mut tape = Tape::new();
        let (gv, dv, nev, ntv) = (tape.leaf(g.clone()), tape.leaf(d.clone()), tape.leaf(ne.clone()), tape.leaf(nt.clone()));
        let Ok(terms) = total_loss(&mut tape, gv, dv, nev, ntv, &weights, &ex) else {
            worst = f64::INFINITY;
            continue;
        };
        let mse = mean_sq(g.data(), d.data());
        let fg = direct_features(&ex, &g, weights.perceptual_stage);
        let fd = direct_features(&ex, &d, weights.perceptual_stage);
        let perceptual = mean_sq(fg.data(), fd.data());
        let mut asym: f64 = ne
            .data()
            .iter()
            .zip(nt.data())
            .map(|(e, t)| {
                let diff = e - t;
                let under = if diff < 0.0 { 1.0 } else { 0.0 };
                (weights.alpha - under).abs() * diff * diff
            })
            .sum();
        if weights.asymm_mean {
            asym /= ne.numel() as f64;
        }
        let total = mse + perceptual + weights.lambda_asymm * asym;
        for (var, want) in [(terms.mse, mse), (terms.perceptual, perceptual), (terms.asymmetric, asym), (terms.total, total)] {
            worst = worst.max((tape.value(var).data()[0] - want).abs());
        }
    }
    Check {
        name: "oracle/losses".into(),
        value: worst,
        threshold: LOSS_ORACLE_THRESHOLD,
    }
}

pub fn oracle_suite(seeds: u64) -> Vec<Check> {
    vec![conv_oracle(seeds), ssim_oracle(seeds), adam_oracle(seeds), loss_oracle(seeds)]
}

