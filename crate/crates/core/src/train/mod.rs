//! Adam, the patch training loop, and checkpoints.
//!
//! Every random choice in a run derives from `TrainConfig::seed` and the
//! `(epoch, step, sample)` position, never from carried RNG state, so a
//! resumed run replays exactly what an uninterrupted one would have done.
//! Parameters and Adam moments are kept at `f32` storage precision after
//! every step; arithmetic happens in `f64`.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamConfig, AdamState, WeightDecayMode};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::RunConfig;
use crate::hsi::rng::derive_seed;
use crate::hsi::{add_awgn, HsiCube, NoiseMode, NoiseSpec};
use crate::losses::{total_loss, ConvFeatureExtractor, LossWeights};
use crate::model::MsdNet;
use crate::tensor::{Tape, TensorError};

/// Loss and per-parameter gradients of one batch sample.
type SampleResult = Result<(f64, Vec<Vec<f64>>), TrainError>;

const INIT_TAG: u64 = 1;
const SHUFFLE_TAG: u64 = 2;
const NOISE_TAG: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `gamma` every `every` epochs.
    Step { every: usize, gamma: f64 },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { every, gamma } => base * gamma.powi((epoch / every) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// 0 means `ceil(patches / batch_size)`.
    pub steps_per_epoch: usize,
    pub patch_size: usize,
    /// 0 means `patch_size`.
    pub patch_stride: usize,
    pub seed: u64,
    pub noise: NoiseMode,
    /// Re-corrupt every sample at every step; otherwise each patch keeps
    /// one noise realisation for the whole run.
    pub fresh_noise: bool,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 8,
            epochs: 5,
            steps_per_epoch: 0,
            patch_size: 32,
            patch_stride: 0,
            seed: 0,
            noise: NoiseMode::Fixed { sigma: 30.0 },
            fresh_noise: true,
            schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn stride(&self) -> usize {
        if self.patch_stride == 0 {
            self.patch_size
        } else {
            self.patch_stride
        }
    }

    pub fn steps_for(&self, patches: usize) -> usize {
        if self.steps_per_epoch > 0 {
            self.steps_per_epoch
        } else {
            patches.div_ceil(self.batch_size)
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training patches")]
    NoPatches,
    #[error("patch {index} is {found}; expected {expected}")]
    PatchMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("non-finite gradient in parameter {param} at index {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
        /// State at the end of the last completed epoch.
        last_good: Box<Checkpoint>,
    },
    #[error("checkpoint does not match the run configuration: {0}")]
    ResumeMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Hsi(#[from] crate::hsi::HsiError),
}

/// Everything needed to resume or deploy a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub model: MsdNet,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    /// Mean training loss of each completed epoch.
    pub history: Vec<f64>,
}

impl Checkpoint {
    /// Fresh run state: seeded initialisation at `f32` precision.
    pub fn initial(config: &RunConfig) -> Self {
        let mut model = MsdNet::new(config.model.clone(), derive_seed(config.train.seed, &[INIT_TAG]));
        let mut adam = AdamState::new(&model.params);
        adam::quantize_f32(&mut model.params, &mut adam);
        Checkpoint {
            config: config.clone(),
            model,
            adam,
            epoch: 0,
            history: Vec::new(),
        }
    }
}

/// Per-step progress passed to the [`train_with`] observer.
#[derive(Debug, Clone, Copy)]
pub enum Progress {
    Step { epoch: usize, step: usize, loss: f64 },
    Epoch { epoch: usize, mean_loss: f64 },
}

pub fn train(patches: &[HsiCube], config: &RunConfig) -> Result<Checkpoint, TrainError> {
    train_with(patches, config, None, &mut |_| {})
}

/// Runs (or resumes) training up to `config.train.epochs` completed epochs.
pub fn train_with(
    patches: &[HsiCube],
    config: &RunConfig,
    resume: Option<Checkpoint>,
    observer: &mut dyn FnMut(Progress),
) -> Result<Checkpoint, TrainError> {
    config
        .validate()
        .map_err(|(k, m)| TrainError::Config(format!("{k}: {m}")))?;
    if patches.is_empty() {
        return Err(TrainError::NoPatches);
    }
    let bands = config.model.bands();
    for (index, p) in patches.iter().enumerate() {
        let (b, h, w) = p.dims();
        if b != bands || h % 4 != 0 || w % 4 != 0 || h != patches[0].height() || w != patches[0].width() {
            return Err(TrainError::PatchMismatch {
                index,
                expected: format!(
                    "{bands} bands, {}x{} (multiples of 4)",
                    patches[0].height(),
                    patches[0].width()
                ),
                found: format!("{b}x{h}x{w}"),
            });
        }
    }

    let mut state = match resume {
        Some(ckpt) => {
            if ckpt.config.model != config.model {
                return Err(TrainError::ResumeMismatch("model architecture differs".into()));
            }
            Checkpoint {
                config: config.clone(),
                ..ckpt
            }
        }
        None => Checkpoint::initial(config),
    };

    let tc = &config.train;
    let extractor = ConvFeatureExtractor::with_default_seed(bands);
    let steps = tc.steps_for(patches.len());
    let bs = tc.batch_size;
    let n = patches.len();
    let clean: Vec<_> = patches.iter().map(HsiCube::to_tensor).collect();

    while state.epoch < tc.epochs {
        let epoch = state.epoch;
        let last_good = state.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, &[SHUFFLE_TAG, epoch as u64])));
        let adam_cfg = AdamConfig {
            learning_rate: tc.schedule.rate(tc.adam.learning_rate, epoch),
            ..tc.adam
        };
        let mut epoch_loss = 0.0;
        for step in 0..steps {
            let batch: Vec<(usize, usize)> = (0..bs).map(|k| (k, order[(step * bs + k) % n])).collect();
            let results: Vec<SampleResult> = batch
                .par_iter()
                .map(|&(k, idx)| {
                    let seed = if tc.fresh_noise {
                        derive_seed(tc.seed, &[NOISE_TAG, epoch as u64, step as u64, k as u64])
                    } else {
                        derive_seed(tc.seed, &[NOISE_TAG, idx as u64])
                    };
                    let spec = NoiseSpec { mode: tc.noise, seed };
                    let (noisy, truth) = add_awgn(&patches[idx], &spec)?;
                    sample_gradients(&state.model, &noisy, &clean[idx], &truth.to_tensor(), &config.loss, &extractor)
                })
                .collect();
            let mut loss = 0.0;
            let mut grads: Vec<Vec<f64>> = state.model.params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
            for r in results {
                let (l, g) = r?;
                loss += l;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    acc.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
                }
            }
            let inv = 1.0 / bs as f64;
            loss *= inv;
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            let failure = if loss.is_finite() {
                match adam_step(&mut state.model.params, &grads, &mut state.adam, &adam_cfg) {
                    Ok(()) => None,
                    Err(e @ TrainError::NonFiniteGradient { .. }) => Some(e.to_string()),
                    Err(e) => return Err(e),
                }
            } else {
                Some(format!("batch loss {loss}"))
            };
            if let Some(detail) = failure {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step,
                    detail,
                    last_good: Box::new(last_good),
                });
            }
            adam::quantize_f32(&mut state.model.params, &mut state.adam);
            observer(Progress::Step { epoch, step, loss });
            epoch_loss += loss;
        }
        let mean_loss = epoch_loss / steps as f64;
        state.history.push(mean_loss);
        state.epoch += 1;
        observer(Progress::Epoch { epoch, mean_loss });
    }
    Ok(state)
}

/// Loss and per-parameter gradients for one noisy/clean pair.
pub fn sample_gradients(
    model: &MsdNet,
    noisy: &HsiCube,
    clean: &crate::tensor::Tensor,
    sigma_true: &crate::tensor::Tensor,
    weights: &LossWeights,
    extractor: &ConvFeatureExtractor,
) -> Result<(f64, Vec<Vec<f64>>), TrainError> {
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let y = tape.leaf(noisy.to_tensor());
    let g = tape.leaf(clean.clone());
    let s = tape.leaf(sigma_true.clone());
    let out = model.forward(&mut tape, &vars, y)?;
    let terms = total_loss(&mut tape, g, out.denoised, out.sigma_hat, s, weights, extractor)?;
    tape.backward(terms.total)?;
    let loss = tape.value(terms.total).data()[0];
    let grads = vars
        .iter()
        .zip(model.params.iter())
        .map(|(&v, (_, t))| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    Ok((loss, grads))
}
