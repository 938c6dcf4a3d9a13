//! Denoise a cube with more bands than the model window by sliding over the
//! spectral axis and averaging overlaps.

use std::error::Error;
use std::io::Write;

use msdnet::denoise::{denoise_cube, denoise_cube_with_sigma, spectral_windows};
use msdnet::hsi::{add_awgn, synth_cube, NoiseSpec};
use msdnet::metrics::psnr;
use msdnet::model::{ModelConfig, MsdNet};

pub fn run_example(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let clean = synth_cube(2, 7, 21, 19)?;
    let (noisy, _) = add_awgn(&clean, &NoiseSpec::fixed(30.0, 3))?;

    let model = MsdNet::new(ModelConfig::micro(3), 1);
    writeln!(out, "window starts for 7 bands, window 3: {:?}", spectral_windows(7, 3))?;

    let (den, sigma) = denoise_cube_with_sigma(&noisy, &model)?;
    writeln!(out, "denoised {:?}, sigma map {:?}", den.dims(), sigma.dims())?;
    writeln!(out, "untrained model: PSNR {:.2} -> {:.2} dB", psnr(&clean, &noisy)?, psnr(&clean, &den)?)?;

    // all-zero weights make the residual vanish: the output is the input
    let identity = MsdNet::zeroed(ModelConfig::micro(3));
    writeln!(out, "zero-weight model returns its input: {}", denoise_cube(&noisy, &identity)? == noisy)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example(&mut std::io::stdout())
}
