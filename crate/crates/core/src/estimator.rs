//! Noise estimation subnetwork.
//!
//! ```text
//! Y ─ stem(3x3, B→C) ─┬─ multiscale k=3 ──┐
//!                     ├─ multiscale k=5 ──┤
//!                     ├─ multiscale k=7 ──┼─ P = cat[f1..f4] ─ attention ─ 1x1 (4C→B) ─ ReLU ─ σ̂
//!                     └─ pyramid pooling ─┘
//! ```
//!
//! Each multiscale module chains `blocks_per_module` conv+ReLU blocks of
//! `block_growth` channels, concatenates every block output and projects
//! back to `C` channels with a linear 1x1 conv. Attention squeezes `P` by
//! global max pooling, runs two fully-connected layers (ReLU, then sigmoid)
//! and rescales each channel of `P` by its gate.

use crate::nn::{Conv, Linear, ParamStore};
use crate::tensor::{PoolMode, Result, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub bands: usize,
    pub base_channels: usize,
    pub kernel_sizes: Vec<usize>,
    pub blocks_per_module: usize,
    pub block_growth: usize,
    pub pyramid_bins: Vec<usize>,
    pub attention_reduction: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            bands: 1,
            base_channels: 16,
            kernel_sizes: vec![3, 5, 7],
            blocks_per_module: 6,
            block_growth: 4,
            pyramid_bins: vec![1, 2, 3, 6],
            attention_reduction: 4,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let ints = [
            ("bands", self.bands),
            ("base_channels", self.base_channels),
            ("blocks_per_module", self.blocks_per_module),
            ("block_growth", self.block_growth),
            ("attention_reduction", self.attention_reduction),
        ];
        if let Some((name, _)) = ints.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be at least 1"));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(format!("kernel_sizes {:?} must be non-empty and odd", self.kernel_sizes));
        }
        if self.pyramid_bins.is_empty() || self.pyramid_bins.contains(&0) {
            return Err(format!("pyramid_bins {:?} must be non-empty and positive", self.pyramid_bins));
        }
        if !self.base_channels.is_multiple_of(self.pyramid_bins.len()) {
            return Err(format!(
                "base_channels {} must split evenly over {} pyramid branches",
                self.base_channels,
                self.pyramid_bins.len()
            ));
        }
        Ok(())
    }

    /// Channels of the fused map `P` (one `C`-wide stream per multiscale
    /// module plus the pyramid stream).
    pub fn fused_channels(&self) -> usize {
        (self.kernel_sizes.len() + 1) * self.base_channels
    }

    pub fn attention_hidden(&self) -> usize {
        (self.fused_channels() / self.attention_reduction).max(1)
    }

    pub fn min_spatial(&self) -> usize {
        self.pyramid_bins.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleModule {
    pub blocks: Vec<Conv>,
    pub projection: Conv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub config: EstimatorConfig,
    pub stem: Conv,
    pub modules: Vec<MultiscaleModule>,
    pub pyramid: Vec<Conv>,
    pub fc1: Linear,
    pub fc2: Linear,
    pub head: Conv,
}

impl Estimator {
    /// Declares all estimator parameters in `store` under `prefix`.
    pub fn build(config: EstimatorConfig, store: &mut ParamStore, prefix: &str) -> Self {
        let c = config.base_channels;
        let g = config.block_growth;
        let stem = Conv::new(store, &format!("{prefix}.stem"), config.bands, c, 3);
        let modules = config
            .kernel_sizes
            .iter()
            .enumerate()
            .map(|(m, &k)| {
                let blocks = (0..config.blocks_per_module)
                    .map(|j| {
                        let cin = if j == 0 { c } else { g };
                        Conv::new(store, &format!("{prefix}.ms{m}.block{j}"), cin, g, k)
                    })
                    .collect();
                let projection = Conv::new(
                    store,
                    &format!("{prefix}.ms{m}.proj"),
                    g * config.blocks_per_module,
                    c,
                    1,
                );
                MultiscaleModule { blocks, projection }
            })
            .collect();
        let branch = c / config.pyramid_bins.len();
        let pyramid = config
            .pyramid_bins
            .iter()
            .map(|b| Conv::new(store, &format!("{prefix}.pyramid{b}"), c, branch, 1))
            .collect();
        let fused = config.fused_channels();
        let hidden = config.attention_hidden();
        let fc1 = Linear::new(store, &format!("{prefix}.attn.fc1"), fused, hidden);
        let fc2 = Linear::new(store, &format!("{prefix}.attn.fc2"), hidden, fused);
        let head = Conv::new(store, &format!("{prefix}.head"), fused, config.bands, 1);
        Estimator {
            config,
            stem,
            modules,
            pyramid,
            fc1,
            fc2,
            head,
        }
    }

    /// `M_i = proj(cat[B_1..B_n])` with `B_1` reading `x` and each later
    /// block reading its predecessor.
    pub fn multiscale_forward(&self, tape: &mut Tape, vars: &[Var], x: Var, module: usize) -> Result<Var> {
        let Some(m) = self.modules.get(module) else {
            return Err(TensorError::contract(
                "multiscale_forward",
                format!("module {module} out of range (have {})", self.modules.len()),
            ));
        };
        let cin = tape.shape(x).first().copied().unwrap_or(0);
        if cin != self.config.base_channels {
            return Err(TensorError::dim("multiscale_forward", "channels", self.config.base_channels, cin));
        }
        let mut outputs = Vec::with_capacity(m.blocks.len());
        let mut h = x;
        for block in &m.blocks {
            h = block.forward_relu(tape, vars, h)?;
            outputs.push(h);
        }
        let cat = tape.concat_channels(&outputs)?;
        m.projection.forward(tape, vars, cat)
    }

    /// Pooled context at each bin size, projected and restored to `H x W`.
    pub fn pyramid_forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let (_, h, w) = tape.value(x).chw("pyramid_forward")?;
        let mut branches = Vec::with_capacity(self.pyramid.len());
        for (&bins, conv) in self.config.pyramid_bins.iter().zip(&self.pyramid) {
            if bins > h.min(w) {
                return Err(TensorError::contract(
                    "pyramid_forward",
                    format!("bin {bins} exceeds a {h}x{w} map"),
                ));
            }
            let pooled = tape.pool2d(x, PoolMode::AdaptiveAvg(bins))?;
            let projected = conv.forward(tape, vars, pooled)?;
            branches.push(tape.resize_nearest_to(projected, h, w)?);
        }
        tape.concat_channels(&branches)
    }

    /// Gate vector `S` in `(0, 1)` for the fused map `p`.
    pub fn attention_gates(&self, tape: &mut Tape, vars: &[Var], p: Var) -> Result<Var> {
        let fused = self.config.fused_channels();
        let (c, _, _) = tape.value(p).chw("channel_attention")?;
        if c != fused {
            return Err(TensorError::dim("channel_attention", "channels", fused, c));
        }
        let pooled = tape.pool2d(p, PoolMode::GlobalMax)?;
        let v = tape.reshape(pooled, &[fused])?;
        let hidden = self.fc1.forward(tape, vars, v)?;
        let hidden = tape.relu(hidden);
        let logits = self.fc2.forward(tape, vars, hidden)?;
        Ok(tape.sigmoid(logits))
    }

    pub fn channel_attention(&self, tape: &mut Tape, vars: &[Var], p: Var) -> Result<Var> {
        let s = self.attention_gates(tape, vars, p)?;
        tape.channel_scale(p, s)
    }

    /// Per-band, per-pixel nonnegative noise level estimate for `y: [B,H,W]`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], y: Var) -> Result<Var> {
        let (b, h, w) = tape.value(y).chw("estimate_noise")?;
        if b != self.config.bands {
            return Err(TensorError::dim("estimate_noise", "bands", self.config.bands, b));
        }
        let min = self.config.min_spatial();
        if h < min || w < min {
            return Err(TensorError::contract(
                "estimate_noise",
                format!("spatial dims {h}x{w} too small, need at least {min}x{min}"),
            ));
        }
        let stem = self.stem.forward_relu(tape, vars, y)?;
        let mut streams = Vec::with_capacity(self.modules.len() + 1);
        for i in 0..self.modules.len() {
            streams.push(self.multiscale_forward(tape, vars, stem, i)?);
        }
        streams.push(self.pyramid_forward(tape, vars, stem)?);
        let p = tape.concat_channels(&streams)?;
        let a = self.channel_attention(tape, vars, p)?;
        let sigma = self.head.forward(tape, vars, a)?;
        Ok(tape.relu(sigma))
    }
}
