//! The three training loss terms on one forward pass, and the asymmetry of
//! the noise-estimation penalty.

use std::error::Error;
use std::io::Write;

use msdnet::hsi::{add_awgn, synth_cube, NoiseSpec};
use msdnet::losses::{asymmetric_loss, total_loss, ConvFeatureExtractor, LossWeights};
use msdnet::model::{ModelConfig, MsdNet};
use msdnet::tensor::{Tape, Tensor};

pub fn run_example(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let model = MsdNet::new(ModelConfig::micro(1), 0);
    let clean = synth_cube(0, 1, 16, 16)?;
    let (noisy, truth) = add_awgn(&clean, &NoiseSpec::fixed(30.0, 0))?;
    let weights = LossWeights::default();
    let extractor = ConvFeatureExtractor::with_default_seed(1);

    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let y = tape.leaf(noisy.to_tensor());
    let fwd = model.forward(&mut tape, &vars, y)?;
    let g = tape.leaf(clean.to_tensor());
    let s = tape.leaf(truth.to_tensor());
    let terms = total_loss(&mut tape, g, fwd.denoised, fwd.sigma_hat, s, &weights, &extractor)?;
    for (name, v) in [
        ("mse", terms.mse),
        ("perceptual", terms.perceptual),
        ("asymmetric", terms.asymmetric),
        ("total", terms.total),
    ] {
        writeln!(out, "{name:>10} = {:.6}", tape.value(v).data()[0])?;
    }
    tape.backward(terms.total)?;
    let n = vars.iter().filter(|&&v| tape.grad(v).is_some()).count();
    writeln!(out, "{n} of {} parameter tensors received gradients", vars.len())?;

    // same error size, opposite signs
    let mut t = Tape::new();
    let truth = t.leaf(Tensor::new(vec![1], vec![0.5])?);
    let under = t.leaf(Tensor::new(vec![1], vec![0.375])?);
    let over = t.leaf(Tensor::new(vec![1], vec![0.625])?);
    let lu = asymmetric_loss(&mut t, under, truth, weights.alpha, false)?;
    let lo = asymmetric_loss(&mut t, over, truth, weights.alpha, false)?;
    let (lu, lo) = (t.value(lu).data()[0], t.value(lo).data()[0]);
    writeln!(out, "alpha={}: under-estimate {lu}, over-estimate {lo}, ratio {}", weights.alpha, lu / lo)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example(&mut std::io::stdout())
}
