//! Gradient and oracle checks, with and without a deliberately broken
//! convolution backward pass.

use std::error::Error;
use std::io::Write;

use msdnet::tensor::Fault;
use msdnet::verify::{run_suite, Suite, VerifyOptions};

pub fn run_example(out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let seeds = 3;
    let report = run_suite(Suite::All, &VerifyOptions { seeds, fault: None });
    write!(out, "{}", report.to_text())?;
    writeln!(out, "all passed: {}", report.all_passed())?;

    let broken = run_suite(
        Suite::Grads,
        &VerifyOptions {
            seeds,
            fault: Some(Fault::ConvBackward),
        },
    );
    let caught: Vec<&str> = broken.checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    writeln!(out, "with injected conv fault, failing checks: {caught:?}")?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example(&mut std::io::stdout())
}
