//! Hyperspectral image denoising: a multiscale noise-level estimator with
//! pyramid pooling and channel attention feeding a residual U-Net, trained
//! with an asymmetric noise-estimation loss.
//!
//! Everything runs on a small reverse-mode autodiff engine ([`tensor`]) in
//! `f64`. See the `examples/` directory for one runnable program per
//! capability.

pub mod cli;
pub mod config;
pub mod denoise;
pub mod estimator;
pub mod hsi;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;
pub mod unet;
pub mod verify;
