use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tape, Tensor, Var};

/// Coordinates agreeing this well are never re-probed.
const RETRY_ABOVE: f64 = 1e-6;

/// Central-difference formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error `O(h^2)`.
    ThreePoint,
    /// `(8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`, error `O(h^4)`;
    /// tolerates larger steps and so less roundoff on tiny gradients.
    FivePoint,
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Probe at most this many coordinates per input (chosen by `seed`);
    /// `None` probes every coordinate.
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
    /// A coordinate that disagrees at `eps` is re-probed with the step cut
    /// tenfold, up to this many times, and the best-agreeing probe counts.
    /// This steps off ReLU/max kinks lying within `eps` of the point; a
    /// wrong backward rule disagrees at every step.
    pub step_cuts: usize,
    pub stencil: Stencil,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-6,
            max_coords_per_input: None,
            seed: 0,
            step_cuts: 2,
            stencil: Stencil::ThreePoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coords_checked: usize,
    /// Coordinates that needed a smaller step.
    pub reprobed: usize,
}

/// Maximum relative error between tape gradients and central differences.
///
/// The relative error of one coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let opts = GradCheckOptions {
        eps,
        ..Default::default()
    };
    gradient_check_with(&f, inputs, &opts, &Tape::new).map(|r| r.max_rel_error)
}

/// Like [`gradient_check`], but with coordinate sampling and a tape
/// factory (used to inject backward faults).
pub fn gradient_check_with<F>(
    f: &F,
    inputs: &[Tensor],
    opts: &GradCheckOptions,
    new_tape: &dyn Fn() -> Tape,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = new_tape();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    drop(tape);

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = probe.iter().map(|x| t.leaf(x.clone())).collect();
        let l = f(&mut t, &vs)?;
        Ok(t.value(l).data()[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coords_checked: 0,
        reprobed: 0,
    };
    for (ii, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = input.data()[i];
            let a = analytic[ii][i];
            let mut eps = opts.eps;
            let mut rel = f64::INFINITY;
            for attempt in 0..=opts.step_cuts {
                let mut at = |x: f64| -> Result<f64> {
                    work[ii].data_mut()[i] = x;
                    let v = eval(&work);
                    work[ii].data_mut()[i] = orig;
                    v
                };
                let (plus, minus) = (at(orig + eps)?, at(orig - eps)?);
                let numeric = match opts.stencil {
                    Stencil::ThreePoint => (plus - minus) / (2.0 * eps),
                    Stencil::FivePoint => {
                        let (plus2, minus2) = (at(orig + 2.0 * eps)?, at(orig - 2.0 * eps)?);
                        (8.0 * (plus - minus) - (plus2 - minus2)) / (12.0 * eps)
                    }
                };
                let r = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                rel = if r.is_nan() { f64::INFINITY } else { rel.min(r) };
                if rel <= RETRY_ABOVE {
                    break;
                }
                if attempt == 0 && opts.step_cuts > 0 {
                    report.reprobed += 1;
                }
                eps /= 10.0;
            }
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ii, i);
            }
        }
    }
    Ok(report)
}
