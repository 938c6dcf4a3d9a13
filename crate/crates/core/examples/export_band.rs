//! Write the same band of a clean, noisy and denoised cube as PGM images.

use std::error::Error;
use std::io::Write;
use std::path::Path;

use msdnet::denoise::denoise_cube;
use msdnet::hsi::{add_awgn, export_band_pgm, synth_cube, NoiseSpec};
use msdnet::model::{ModelConfig, MsdNet};

pub fn run_example(dir: &Path, out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let clean = synth_cube(9, 12, 48, 48)?;
    let (noisy, _) = add_awgn(&clean, &NoiseSpec::fixed(50.0, 1))?;
    let den = denoise_cube(&noisy, &MsdNet::new(ModelConfig::micro(3), 2))?;
    let band = 9;
    for (name, cube) in [("clean", &clean), ("noisy", &noisy), ("denoised", &den)] {
        let path = dir.join(format!("{name}_band{band}.pgm"));
        export_band_pgm(cube, band, &path)?;
        writeln!(out, "{} ({} bytes)", path.display(), std::fs::metadata(&path)?.len())?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(std::env::temp_dir);
    run_example(&dir, &mut std::io::stdout())
}
