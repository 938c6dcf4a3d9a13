//! Flat `key = value` run configuration.
//!
//! One setting per line; `#` starts a comment. Absent keys take their
//! defaults, unknown or repeated keys are rejected, and every error names
//! the offending line and key.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::estimator::EstimatorConfig;
use crate::hsi::NoiseMode;
use crate::losses::LossWeights;
use crate::model::ModelConfig;
use crate::train::{LrSchedule, TrainConfig, WeightDecayMode};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: key `{key}`: {msg}")]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "bands",
    "base_channels",
    "kernel_sizes",
    "blocks_per_module",
    "block_growth",
    "pyramid_bins",
    "attention_reduction",
    "unet_widths",
    "alpha",
    "lambda_asymm",
    "perceptual_stage",
    "asymm_reduction",
    "learning_rate",
    "weight_decay",
    "weight_decay_mode",
    "beta1",
    "beta2",
    "adam_eps",
    "batch_size",
    "epochs",
    "steps_per_epoch",
    "patch_size",
    "patch_stride",
    "seed",
    "fresh_noise",
    "lr_schedule",
    "noise_mode",
    "noise_sigma",
    "noise_lo",
    "noise_hi",
];

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_list(v: &str) -> Result<Vec<usize>, String> {
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

fn fmt_list(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Full-size training setup: 31-band 64x64 patches, batch 64, 100 epochs.
    pub fn full_scale() -> Self {
        let mut cfg = RunConfig::default();
        cfg.model.estimator.bands = 31;
        cfg.train.batch_size = 64;
        cfg.train.epochs = 100;
        cfg.train.patch_size = 64;
        cfg
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut noise_fields = (None, None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |key: &str, msg: String| ConfigError {
                line,
                key: key.to_string(),
                msg,
            };
            let Some((key, value)) = body.split_once('=') else {
                return Err(err(body, "expected `key = value`".into()));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(err(key, "unknown key".into()));
            };
            if seen.contains(&known) {
                return Err(err(key, "repeated key".into()));
            }
            seen.push(known);
            cfg.set(key, value, &mut noise_fields).map_err(|m| err(key, m))?;
        }
        let (mode, sigma, lo, hi) = noise_fields;
        cfg.train.noise = match mode.unwrap_or("fixed") {
            "fixed" => NoiseMode::Fixed {
                sigma: sigma.unwrap_or(30.0),
            },
            _ => NoiseMode::Blind {
                lo: lo.unwrap_or(10.0),
                hi: hi.unwrap_or(70.0),
            },
        };
        cfg.validate().map_err(|(key, msg)| ConfigError {
            line: text
                .lines()
                .position(|l| l.split('#').next().unwrap_or("").trim().starts_with(key))
                .map_or(0, |p| p + 1),
            key: key.to_string(),
            msg,
        })?;
        Ok(cfg)
    }

    fn set<'a>(
        &mut self,
        key: &str,
        v: &'a str,
        noise: &mut (Option<&'a str>, Option<f64>, Option<f64>, Option<f64>),
    ) -> Result<(), String> {
        let est: &mut EstimatorConfig = &mut self.model.estimator;
        let tr = &mut self.train;
        match key {
            "bands" => est.bands = parse_num(v)?,
            "base_channels" => est.base_channels = parse_num(v)?,
            "kernel_sizes" => est.kernel_sizes = parse_list(v)?,
            "blocks_per_module" => est.blocks_per_module = parse_num(v)?,
            "block_growth" => est.block_growth = parse_num(v)?,
            "pyramid_bins" => est.pyramid_bins = parse_list(v)?,
            "attention_reduction" => est.attention_reduction = parse_num(v)?,
            "unet_widths" => {
                let w = parse_list(v)?;
                self.model.unet_widths = w
                    .try_into()
                    .map_err(|w: Vec<usize>| format!("expected 3 widths, got {}", w.len()))?;
            }
            "alpha" => self.loss.alpha = parse_num(v)?,
            "lambda_asymm" => self.loss.lambda_asymm = parse_num(v)?,
            "perceptual_stage" => self.loss.perceptual_stage = parse_num(v)?,
            "asymm_reduction" => {
                self.loss.asymm_mean = match v {
                    "sum" => false,
                    "mean" => true,
                    _ => return Err(format!("expected `sum` or `mean`, got `{v}`")),
                }
            }
            "learning_rate" => tr.adam.learning_rate = parse_num(v)?,
            "weight_decay" => tr.adam.weight_decay = parse_num(v)?,
            "weight_decay_mode" => {
                tr.adam.decay_mode = match v {
                    "l2" => WeightDecayMode::L2,
                    "decoupled" => WeightDecayMode::Decoupled,
                    _ => return Err(format!("expected `l2` or `decoupled`, got `{v}`")),
                }
            }
            "beta1" => tr.adam.beta1 = parse_num(v)?,
            "beta2" => tr.adam.beta2 = parse_num(v)?,
            "adam_eps" => tr.adam.eps = parse_num(v)?,
            "batch_size" => tr.batch_size = parse_num(v)?,
            "epochs" => tr.epochs = parse_num(v)?,
            "steps_per_epoch" => tr.steps_per_epoch = parse_num(v)?,
            "patch_size" => tr.patch_size = parse_num(v)?,
            "patch_stride" => tr.patch_stride = parse_num(v)?,
            "seed" => tr.seed = parse_num(v)?,
            "fresh_noise" => tr.fresh_noise = parse_num(v)?,
            "lr_schedule" => tr.schedule = v.parse()?,
            "noise_mode" => match v {
                "fixed" | "blind" => noise.0 = Some(v),
                _ => return Err(format!("expected `fixed` or `blind`, got `{v}`")),
            },
            "noise_sigma" => noise.1 = Some(parse_num(v)?),
            "noise_lo" => noise.2 = Some(parse_num(v)?),
            "noise_hi" => noise.3 = Some(parse_num(v)?),
            _ => unreachable!("key list and setter disagree on {key}"),
        }
        Ok(())
    }

    /// Cross-field checks; the error carries the key to blame.
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        self.model.estimator.validate().map_err(|m| ("bands", m))?;
        if self.model.unet_widths.contains(&0) {
            return Err(("unet_widths", "widths must be positive".into()));
        }
        self.loss.validate().map_err(|m| ("alpha", m))?;
        let t = &self.train;
        if !(t.adam.learning_rate > 0.0) {
            return Err(("learning_rate", "must be positive".into()));
        }
        if !(t.adam.weight_decay >= 0.0) {
            return Err(("weight_decay", "must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&t.adam.beta1) || !(0.0..1.0).contains(&t.adam.beta2) {
            return Err(("beta1", "betas must lie in [0, 1)".into()));
        }
        if !(t.adam.eps > 0.0) {
            return Err(("adam_eps", "must be positive".into()));
        }
        if t.batch_size == 0 {
            return Err(("batch_size", "must be at least 1".into()));
        }
        if t.patch_size == 0 || !t.patch_size.is_multiple_of(4) {
            return Err(("patch_size", "must be a positive multiple of 4".into()));
        }
        if t.patch_size < self.model.estimator.min_spatial() {
            return Err(("patch_size", "smaller than the largest pyramid bin".into()));
        }
        match t.noise {
            NoiseMode::Fixed { sigma } if !(sigma >= 0.0) => {
                return Err(("noise_sigma", "must be >= 0".into()));
            }
            NoiseMode::Blind { lo, hi } if !(lo >= 0.0 && lo <= hi) => {
                return Err(("noise_lo", "need 0 <= noise_lo <= noise_hi".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Canonical text with every key; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let e = &self.model.estimator;
        let t = &self.train;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("bands", e.bands.to_string());
        put("base_channels", e.base_channels.to_string());
        put("kernel_sizes", fmt_list(&e.kernel_sizes));
        put("blocks_per_module", e.blocks_per_module.to_string());
        put("block_growth", e.block_growth.to_string());
        put("pyramid_bins", fmt_list(&e.pyramid_bins));
        put("attention_reduction", e.attention_reduction.to_string());
        put("unet_widths", fmt_list(&self.model.unet_widths));
        put("alpha", format!("{:?}", self.loss.alpha));
        put("lambda_asymm", format!("{:?}", self.loss.lambda_asymm));
        put("perceptual_stage", self.loss.perceptual_stage.to_string());
        put("asymm_reduction", if self.loss.asymm_mean { "mean" } else { "sum" }.into());
        put("learning_rate", format!("{:?}", t.adam.learning_rate));
        put("weight_decay", format!("{:?}", t.adam.weight_decay));
        put(
            "weight_decay_mode",
            match t.adam.decay_mode {
                WeightDecayMode::L2 => "l2",
                WeightDecayMode::Decoupled => "decoupled",
            }
            .into(),
        );
        put("beta1", format!("{:?}", t.adam.beta1));
        put("beta2", format!("{:?}", t.adam.beta2));
        put("adam_eps", format!("{:?}", t.adam.eps));
        put("batch_size", t.batch_size.to_string());
        put("epochs", t.epochs.to_string());
        put("steps_per_epoch", t.steps_per_epoch.to_string());
        put("patch_size", t.patch_size.to_string());
        put("patch_stride", t.patch_stride.to_string());
        put("seed", t.seed.to_string());
        put("fresh_noise", t.fresh_noise.to_string());
        put("lr_schedule", t.schedule.to_string());
        match t.noise {
            NoiseMode::Fixed { sigma } => {
                put("noise_mode", "fixed".into());
                put("noise_sigma", format!("{sigma:?}"));
            }
            NoiseMode::Blind { lo, hi } => {
                put("noise_mode", "blind".into());
                put("noise_lo", format!("{lo:?}"));
                put("noise_hi", format!("{hi:?}"));
            }
        }
        s
    }
}

impl FromStr for LrSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "constant" {
            return Ok(LrSchedule::Constant);
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["step", every, gamma] => {
                let every: usize = parse_num(every)?;
                if every == 0 {
                    return Err("step schedule period must be at least 1".into());
                }
                Ok(LrSchedule::Step {
                    every,
                    gamma: parse_num(gamma)?,
                })
            }
            _ => Err(format!("expected `constant` or `step:EVERY:GAMMA`, got `{s}`")),
        }
    }
}

impl std::fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LrSchedule::Constant => write!(f, "constant"),
            LrSchedule::Step { every, gamma } => write!(f, "step:{every}:{gamma:?}"),
        }
    }
}
