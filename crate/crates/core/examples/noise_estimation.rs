//! Run the noise-level estimator on its own and inspect each stage.

use std::error::Error;
use std::io::Write;

use msdnet::hsi::{add_awgn, synth_cube, NoiseSpec};
use msdnet::model::{ModelConfig, MsdNet};
use msdnet::tensor::Tape;

pub fn run_example(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let model = MsdNet::new(ModelConfig::micro(3), 4);
    let est = &model.estimator;
    writeln!(
        out,
        "estimator: {} multiscale modules, pyramid bins {:?}, {} fused channels",
        est.config.kernel_sizes.len(),
        est.config.pyramid_bins,
        est.config.fused_channels()
    )?;

    let clean = synth_cube(3, 3, 16, 16)?;
    let (noisy, truth) = add_awgn(&clean, &NoiseSpec::blind(10.0, 70.0, 5))?;

    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let y = tape.leaf(noisy.to_tensor());
    let stem = est.stem.forward_relu(&mut tape, &vars, y)?;
    for m in 0..est.config.kernel_sizes.len() {
        let f = est.multiscale_forward(&mut tape, &vars, stem, m)?;
        writeln!(out, "  module k={}: {:?}", est.config.kernel_sizes[m], tape.shape(f))?;
    }
    let pyr = est.pyramid_forward(&mut tape, &vars, stem)?;
    writeln!(out, "  pyramid: {:?}", tape.shape(pyr))?;
    let sigma = est.forward(&mut tape, &vars, y)?;
    let s = tape.value(sigma);
    let mean = s.data().iter().sum::<f64>() / s.numel() as f64;
    writeln!(out, "sigma map {:?}, mean {mean:.4} (untrained)", s.shape())?;
    let t: Vec<String> = truth.per_band().iter().map(|v| format!("{v:.4}")).collect();
    writeln!(out, "true per-band sigma [{}]", t.join(", "))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example(&mut std::io::stdout())
}
