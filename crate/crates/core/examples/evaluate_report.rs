//! Score noisy and denoised cubes over several noise settings and print the
//! table and its CSV form.

use std::error::Error;
use std::io::Write;

use msdnet::hsi::{synth_cube, NoiseSpec};
use msdnet::metrics::{evaluate, Index, METHOD_DENOISED, METHOD_NOISY};
use msdnet::model::{ModelConfig, MsdNet};

pub fn run_example(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let clean = synth_cube(4, 4, 24, 24)?;
    let model = MsdNet::new(ModelConfig::micro(2), 8);
    let settings = [
        NoiseSpec::fixed(30.0, 1),
        NoiseSpec::fixed(50.0, 2),
        NoiseSpec::fixed(70.0, 3),
        NoiseSpec::blind(10.0, 70.0, 4),
    ];
    let report = evaluate(&clean, &model, &settings)?;
    write!(out, "{}", report.to_text())?;
    writeln!(out)?;
    write!(out, "{}", report.to_csv())?;
    let noisy = report.get("sigma=30", METHOD_NOISY, Index::Psnr).unwrap_or(f64::NAN);
    let den = report.get("sigma=30", METHOD_DENOISED, Index::Psnr).unwrap_or(f64::NAN);
    writeln!(out, "sigma=30 PSNR: noisy {noisy:.2}, untrained model {den:.2}")?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example(&mut std::io::stdout())
}
