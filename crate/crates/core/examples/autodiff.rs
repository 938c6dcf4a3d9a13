//! Record a small conv net on the tape, backpropagate, and compare against
//! central finite differences.

use std::error::Error;
use std::io::Write;

use msdnet::tensor::{gradient_check, gradient_check_with, GradCheckOptions, Padding, PoolMode, Stencil, Tape, Tensor, Var};

pub fn run_example(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let x = Tensor::from_fn(&[2, 6, 6], |i| ((i * 7919) % 13) as f64 / 13.0 - 0.4);
    let w = Tensor::from_fn(&[3, 2, 3, 3], |i| ((i * 104_729) % 17) as f64 / 17.0 - 0.5);
    let b = Tensor::new(vec![3], vec![0.1, -0.2, 0.05])?;

    let net = |tape: &mut Tape, v: &[Var]| {
        let y = tape.conv2d(v[0], v[1], v[2], 1, Padding::Same)?;
        let y = tape.relu(y);
        let y = tape.pool2d(y, PoolMode::Avg2x2)?;
        let y = tape.mul(y, y)?;
        Ok(tape.sum(y))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = [&x, &w, &b].iter().map(|t| tape.leaf((*t).clone())).collect();
    let loss = net(&mut tape, &vars)?;
    tape.backward(loss)?;
    writeln!(out, "loss = {:.6}", tape.value(loss).data()[0])?;
    let gb = tape.grad(vars[2]).expect("bias takes part in the loss");
    writeln!(out, "d loss / d bias = {gb:?}")?;

    let inputs = [x, w, b];
    writeln!(out, "finite-difference check: max relative error {:.2e}", gradient_check(net, &inputs, 1e-5)?)?;

    // five-point stencil, sampling a few coordinates per input
    let opts = GradCheckOptions {
        eps: 1e-3,
        max_coords_per_input: Some(8),
        stencil: Stencil::FivePoint,
        ..GradCheckOptions::default()
    };
    let report = gradient_check_with(&net, &inputs, &opts, &Tape::new)?;
    writeln!(
        out,
        "sampled check: {:.2e} over {} coordinates",
        report.max_rel_error, report.coords_checked
    )?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example(&mut std::io::stdout())
}
