//! Training losses: pixel MSE, feature-space (perceptual) MSE, the
//! asymmetric noise-estimation loss and their weighted total.

use crate::nn::{Conv, ParamStore};
use crate::tensor::{PoolMode, Result, Tape, TensorError, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    /// Over-estimation weight; under-estimation is weighted `1 - alpha`.
    pub alpha: f64,
    pub lambda_asymm: f64,
    /// 1-based extractor stage used by the perceptual term.
    pub perceptual_stage: usize,
    /// Divide the asymmetric loss by its element count instead of summing.
    pub asymm_mean: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.25,
            lambda_asymm: 0.5,
            perceptual_stage: 2,
            asymm_mean: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha {} must lie in (0, 1)", self.alpha));
        }
        if !(self.lambda_asymm >= 0.0 && self.lambda_asymm.is_finite()) {
            return Err(format!("lambda_asymm {} must be finite and >= 0", self.lambda_asymm));
        }
        if self.perceptual_stage == 0 {
            return Err("perceptual_stage is 1-based".into());
        }
        Ok(())
    }
}

/// A frozen feature map with addressable stages (1-based).
pub trait FeatureExtractor {
    fn num_stages(&self) -> usize;

    /// Records the stage-`stage` features of `x` on `tape`.
    fn features(&self, tape: &mut Tape, x: Var, stage: usize) -> Result<Var>;
}

/// Fixed two-stage conv net: 3x3 conv to 8 channels + ReLU, then 2x2 average
/// pooling, 3x3 conv to 16 channels + ReLU. Weights come from a fixed seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFeatureExtractor {
    params: ParamStore,
    stages: Vec<Conv>,
}

impl ConvFeatureExtractor {
    pub const DEFAULT_SEED: u64 = 0x00f3_a7e5;

    pub fn new(in_channels: usize, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let stages = vec![
            Conv::new(&mut params, "phi.stage1", in_channels, 8, 3),
            Conv::new(&mut params, "phi.stage2", 8, 16, 3),
        ];
        params.init_uniform(seed);
        // small positive bias keeps the ReLU features from vanishing on
        // low-contrast inputs
        for conv in &stages {
            params.get_mut(conv.bias).data_mut().fill(0.05);
        }
        ConvFeatureExtractor { params, stages }
    }

    pub fn with_default_seed(in_channels: usize) -> Self {
        Self::new(in_channels, Self::DEFAULT_SEED)
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }
}

impl FeatureExtractor for ConvFeatureExtractor {
    fn num_stages(&self) -> usize {
        self.stages.len()
    }

    fn features(&self, tape: &mut Tape, x: Var, stage: usize) -> Result<Var> {
        if stage == 0 || stage > self.stages.len() {
            return Err(TensorError::contract(
                "perceptual_loss",
                format!("stage {stage} does not exist (extractor has {})", self.stages.len()),
            ));
        }
        let vars = self.params.register(tape);
        let mut h = x;
        for (i, conv) in self.stages[..stage].iter().enumerate() {
            if i > 0 {
                h = tape.pool2d(h, PoolMode::Avg2x2)?;
            }
            h = conv.forward_relu(tape, &vars, h)?;
        }
        Ok(h)
    }
}

/// `(1/N) * sum (G - D)^2`.
pub fn mse_loss(tape: &mut Tape, truth: Var, denoised: Var) -> Result<Var> {
    tape.mse(truth, denoised)
}

/// `(1/(C_j H_j W_j)) * ||phi_j(G) - phi_j(D)||^2`.
pub fn perceptual_loss(
    tape: &mut Tape,
    truth: Var,
    denoised: Var,
    extractor: &dyn FeatureExtractor,
    stage: usize,
) -> Result<Var> {
    let fg = extractor.features(tape, truth, stage)?;
    let fd = extractor.features(tape, denoised, stage)?;
    tape.mse(fg, fd)
}

/// `sum_i |alpha - [est_i < truth_i]| * (est_i - truth_i)^2`.
pub fn asymmetric_loss(tape: &mut Tape, est: Var, truth: Var, alpha: f64, mean: bool) -> Result<Var> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TensorError::contract("asymmetric_loss", format!("alpha {alpha} outside (0, 1)")));
    }
    tape.asymmetric(est, truth, alpha, mean)
}

/// Handles to the three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub mse: Var,
    pub perceptual: Var,
    pub asymmetric: Var,
    pub total: Var,
}

/// `L = L_M + L_P + lambda_asymm * L_asymm`.
pub fn total_loss(
    tape: &mut Tape,
    truth: Var,
    denoised: Var,
    sigma_est: Var,
    sigma_true: Var,
    weights: &LossWeights,
    extractor: &dyn FeatureExtractor,
) -> Result<LossTerms> {
    let mse = mse_loss(tape, truth, denoised)?;
    let perceptual = perceptual_loss(tape, truth, denoised, extractor, weights.perceptual_stage)?;
    let asymmetric = asymmetric_loss(tape, sigma_est, sigma_true, weights.alpha, weights.asymm_mean)?;
    let base = tape.add(mse, perceptual)?;
    let weighted = tape.scale(asymmetric, weights.lambda_asymm);
    let total = tape.add(base, weighted)?;
    Ok(LossTerms {
        mse,
        perceptual,
        asymmetric,
        total,
    })
}
