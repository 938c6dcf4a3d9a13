//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numerics; each function is the
//! most literal transcription of its definition.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Quadruple-loop cross-correlation of `x: [cin,h,w]` with
/// `weight: [cout,cin,k,k]`, zero padding `pad`, stride `stride`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias[co];
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let xv = x[(ci * h + iy as usize) * w + ix as usize];
                            acc += weight[((co * cin + ci) * k + ky) * k + kx] * xv;
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    (out, ho, wo)
}

pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

/// 2x2 stride-2 average pooling of a `[c,h,w]` map.
pub fn avg_pool2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            for xx in 0..wo {
                let at = |dy: usize, dx: usize| x[(ch * h + 2 * y + dy) * w + 2 * xx + dx];
                out[(ch * ho + y) * wo + xx] = (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0;
            }
        }
    }
    out
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s / a.len() as f64
}

pub fn asymmetric(est: &[f64], truth: &[f64], alpha: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..est.len() {
        let d = est[i] - truth[i];
        let wgt = if d < 0.0 { 1.0 - alpha } else { alpha };
        s += wgt * d * d;
    }
    s
}

/// Scalar Adam with L2 weight decay folded into the gradient.
pub struct ScalarAdam {
    pub lr: f64,
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
    pub wd: f64,
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdam {
    pub fn new(lr: f64, wd: f64) -> Self {
        ScalarAdam {
            lr,
            b1: 0.9,
            b2: 0.999,
            eps: 1e-8,
            wd,
            m: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn step(&mut self, w: f64, g: f64) -> f64 {
        let g = g + self.wd * w;
        self.t += 1;
        self.m = self.b1 * self.m + (1.0 - self.b1) * g;
        self.v = self.b2 * self.v + (1.0 - self.b2) * g * g;
        let mh = self.m / (1.0 - self.b1.powi(self.t));
        let vh = self.v / (1.0 - self.b2.powi(self.t));
        w - self.lr * mh / (vh.sqrt() + self.eps)
    }
}

/// SSIM of one `h x w` band by explicitly visiting every full 11x11 window
/// position with a 2-D Gaussian weight table.
pub fn direct_ssim_band(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    const N: usize = 11;
    let sigma = 1.5f64;
    let mut win = [[0.0f64; N]; N];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let dy = i as f64 - 5.0;
            let dx = j as f64 - 5.0;
            *cell = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *cell;
        }
    }
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut acc = 0.0;
    let mut count = 0;
    for y0 in 0..=h - N {
        for x0 in 0..=w - N {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let wt = win[i][j] / total;
                    ma += wt * a[(y0 + i) * w + x0 + j];
                    mb += wt * b[(y0 + i) * w + x0 + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..N {
                for j in 0..N {
                    let wt = win[i][j] / total;
                    let da = a[(y0 + i) * w + x0 + j] - ma;
                    let db = b[(y0 + i) * w + x0 + j] - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A `[c,h,w]` feature map held as a flat vector.
#[derive(Debug, Clone)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub d: Vec<f64>,
}

impl Map {
    pub fn new(c: usize, h: usize, w: usize, d: Vec<f64>) -> Self {
        assert_eq!(d.len(), c * h * w);
        Map { c, h, w, d }
    }

    pub fn cat(parts: &[Map]) -> Map {
        let mut d = Vec::new();
        for p in parts {
            d.extend_from_slice(&p.d);
        }
        Map::new(parts.iter().map(|p| p.c).sum(), parts[0].h, parts[0].w, d)
    }

    pub fn relu(mut self) -> Map {
        self.d = relu(&self.d);
        self
    }
}

/// Same-padded stride-1 convolution with parameters `{name}.weight` and
/// `{name}.bias` looked up by name.
pub fn conv_named(x: &Map, store: &msdnet::nn::ParamStore, name: &str) -> Map {
    let wt = store.get(store.find(&format!("{name}.weight")).expect(name));
    let bt = store.get(store.find(&format!("{name}.bias")).expect(name));
    let (cout, k) = (wt.shape()[0], wt.shape()[2]);
    assert_eq!(wt.shape()[1], x.c, "{name}");
    let (d, ho, wo) = naive_conv(&x.d, x.c, x.h, x.w, wt.data(), bt.data(), cout, k, 1, (k - 1) / 2);
    Map::new(cout, ho, wo, d)
}

/// Cell means over `bins x bins` near-equal partitions; cell `i` of `n`
/// spans `[floor(i n / b), ceil((i+1) n / b))`.
pub fn adaptive_avg(x: &Map, bins: usize) -> Map {
    let range = |i: usize, n: usize| (i * n / bins, ((i + 1) * n).div_ceil(bins));
    let mut d = Vec::new();
    for ch in 0..x.c {
        for by in 0..bins {
            for bx in 0..bins {
                let (y0, y1) = range(by, x.h);
                let (x0, x1) = range(bx, x.w);
                let mut s = 0.0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        s += x.d[(ch * x.h + y) * x.w + xx];
                    }
                }
                d.push(s / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Map::new(x.c, bins, bins, d)
}

pub fn nearest_to(x: &Map, oh: usize, ow: usize) -> Map {
    let mut d = Vec::new();
    for ch in 0..x.c {
        for y in 0..oh {
            for xx in 0..ow {
                d.push(x.d[(ch * x.h + y * x.h / oh) * x.w + xx * x.w / ow]);
            }
        }
    }
    Map::new(x.c, oh, ow, d)
}

pub fn max_pool2(x: &Map) -> Map {
    let (ho, wo) = (x.h / 2, x.w / 2);
    let mut d = Vec::new();
    for ch in 0..x.c {
        for y in 0..ho {
            for xx in 0..wo {
                let at = |dy: usize, dx: usize| x.d[(ch * x.h + 2 * y + dy) * x.w + 2 * xx + dx];
                d.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
            }
        }
    }
    Map::new(x.c, ho, wo, d)
}

pub fn dense(x: &[f64], store: &msdnet::nn::ParamStore, name: &str) -> Vec<f64> {
    let wt = store.get(store.find(&format!("{name}.weight")).expect(name));
    let bt = store.get(store.find(&format!("{name}.bias")).expect(name));
    let (m, n) = (wt.shape()[0], wt.shape()[1]);
    (0..m)
        .map(|i| bt.data()[i] + (0..n).map(|j| wt.data()[i * n + j] * x[j]).sum::<f64>())
        .collect()
}

pub fn ref_multiscale(x: &Map, store: &msdnet::nn::ParamStore, prefix: &str, module: usize, blocks: usize) -> Map {
    let mut outs = Vec::new();
    let mut h = x.clone();
    for j in 0..blocks {
        h = conv_named(&h, store, &format!("{prefix}.ms{module}.block{j}")).relu();
        outs.push(h.clone());
    }
    conv_named(&Map::cat(&outs), store, &format!("{prefix}.ms{module}.proj"))
}

pub fn ref_pyramid(x: &Map, store: &msdnet::nn::ParamStore, prefix: &str, bins: &[usize]) -> Map {
    let branches: Vec<Map> = bins
        .iter()
        .map(|&b| {
            let p = conv_named(&adaptive_avg(x, b), store, &format!("{prefix}.pyramid{b}"));
            nearest_to(&p, x.h, x.w)
        })
        .collect();
    Map::cat(&branches)
}

/// Returns the gated map and the gate vector.
pub fn ref_attention(p: &Map, store: &msdnet::nn::ParamStore, prefix: &str) -> (Map, Vec<f64>) {
    let plane = p.h * p.w;
    let v: Vec<f64> = p.d.chunks(plane).map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let hidden = relu(&dense(&v, store, &format!("{prefix}.attn.fc1")));
    let s: Vec<f64> = dense(&hidden, store, &format!("{prefix}.attn.fc2"))
        .iter()
        .map(|z| 1.0 / (1.0 + (-z).exp()))
        .collect();
    let d = p.d.iter().enumerate().map(|(i, v)| v * s[i / plane]).collect();
    (Map::new(p.c, p.h, p.w, d), s)
}

pub fn ref_estimator(
    y: &Map,
    store: &msdnet::nn::ParamStore,
    prefix: &str,
    cfg: &msdnet::estimator::EstimatorConfig,
) -> Map {
    let stem = conv_named(y, store, &format!("{prefix}.stem")).relu();
    let mut streams: Vec<Map> = (0..cfg.kernel_sizes.len())
        .map(|m| ref_multiscale(&stem, store, prefix, m, cfg.blocks_per_module))
        .collect();
    streams.push(ref_pyramid(&stem, store, prefix, &cfg.pyramid_bins));
    let (a, _) = ref_attention(&Map::cat(&streams), store, prefix);
    conv_named(&a, store, &format!("{prefix}.head")).relu()
}

/// Residual of the 16-conv UNet.
pub fn ref_unet(y: &Map, sigma: &Map, store: &msdnet::nn::ParamStore, prefix: &str) -> Map {
    let c = |x: &Map, n: &str| conv_named(x, store, &format!("{prefix}.{n}"));
    let cr = |x: &Map, n: &str| c(x, n).relu();
    let e1 = cr(&cr(&Map::cat(&[y.clone(), sigma.clone()]), "enc1a"), "enc1b");
    let e2 = cr(&cr(&max_pool2(&e1), "enc2a"), "enc2b");
    let mut m = max_pool2(&e2);
    for n in ["mid1", "mid2", "mid3", "mid4"] {
        m = cr(&m, n);
    }
    let u2 = cr(&nearest_to(&m, e2.h, e2.w), "up2");
    let r2 = cr(&cr(&Map::cat(&[u2, e2]), "dec2a"), "dec2b");
    let u1 = cr(&nearest_to(&r2, e1.h, e1.w), "up1");
    let r1 = cr(&cr(&cr(&Map::cat(&[u1, e1]), "dec1a"), "dec1b"), "dec1c");
    c(&r1, "out")
}
