//! The full blind denoiser: estimator feeding the residual UNet.

use crate::estimator::{Estimator, EstimatorConfig};
use crate::nn::ParamStore;
use crate::tensor::{Result, Tape, Tensor, Var};
use crate::unet::UNet;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub estimator: EstimatorConfig,
    pub unet_widths: [usize; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            estimator: EstimatorConfig::default(),
            unet_widths: [64, 128, 256],
        }
    }
}

impl ModelConfig {
    pub fn bands(&self) -> usize {
        self.estimator.bands
    }

    /// A tiny configuration for gradient checks and examples
    /// (`C = 4`, UNet widths 4/8/16).
    pub fn micro(bands: usize) -> Self {
        ModelConfig {
            estimator: EstimatorConfig {
                bands,
                base_channels: 4,
                block_growth: 1,
                ..EstimatorConfig::default()
            },
            unet_widths: [4, 8, 16],
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.estimator.validate()?;
        if self.unet_widths.contains(&0) {
            return Err(format!("unet_widths {:?} must be positive", self.unet_widths));
        }
        Ok(())
    }
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub sigma_hat: Var,
    pub denoised: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsdNet {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub estimator: Estimator,
    pub unet: UNet,
}

impl MsdNet {
    /// Builds the model with zeroed parameters.
    ///
    /// # Panics
    /// If `config` fails validation.
    pub fn zeroed(config: ModelConfig) -> Self {
        if let Err(e) = config.validate() {
            panic!("invalid model config: {e}");
        }
        let mut params = ParamStore::new();
        let estimator = Estimator::build(config.estimator.clone(), &mut params, "est");
        let unet = UNet::build(config.bands(), config.unet_widths, &mut params, "unet");
        MsdNet {
            config,
            params,
            estimator,
            unet,
        }
    }

    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut model = Self::zeroed(config);
        model.params.init_uniform(seed);
        model
    }

    pub fn bands(&self) -> usize {
        self.config.bands()
    }

    /// Records the whole model on `tape` given registered parameter `vars`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], y: Var) -> Result<ForwardVars> {
        let sigma_hat = self.estimator.forward(tape, vars, y)?;
        let denoised = self.unet.denoise(tape, vars, y, sigma_hat)?;
        Ok(ForwardVars { sigma_hat, denoised })
    }

    /// Inference on a `[B,H,W]` tensor; returns `(denoised, sigma_hat)`.
    pub fn run(&self, y: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let yv = tape.leaf(y.clone());
        let out = self.forward(&mut tape, &vars, yv)?;
        Ok((tape.value(out.denoised).clone(), tape.value(out.sigma_hat).clone()))
    }
}
