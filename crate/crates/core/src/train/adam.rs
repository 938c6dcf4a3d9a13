use crate::nn::ParamStore;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightDecayMode {
    /// `g <- g + wd * w` before the moment updates.
    L2,
    /// `w <- w - lr * wd * w` alongside the Adam step.
    Decoupled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: WeightDecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
            decay_mode: WeightDecayMode::L2,
        }
    }
}

/// First and second moments per parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
///
/// Gradients are validated before anything is touched; a non-finite entry
/// aborts the step and names the parameter.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::Shape(format!(
            "{} gradients / {} moment slots for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for id in params.ids() {
        let (g, n) = (&grads[id.index()], params.get(id).numel());
        if g.len() != n {
            return Err(TrainError::Shape(format!(
                "gradient for {} has {} entries, expected {n}",
                params.name(id),
                g.len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                param: params.name(id).to_string(),
                index: i,
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (k, w) in params.tensors_mut().iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[k], &mut state.v[k], &grads[k]);
        for (i, wi) in w.data_mut().iter_mut().enumerate() {
            let gi = match cfg.decay_mode {
                WeightDecayMode::L2 => g[i] + cfg.weight_decay * *wi,
                WeightDecayMode::Decoupled => g[i],
            };
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            let mut delta = cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
            if cfg.decay_mode == WeightDecayMode::Decoupled {
                delta += cfg.learning_rate * cfg.weight_decay * *wi;
            }
            *wi -= delta;
        }
    }
    Ok(())
}

/// Rounds parameters and moments to `f32` precision.
pub(crate) fn quantize_f32(params: &mut ParamStore, state: &mut AdamState) {
    let round = |xs: &mut [f64]| xs.iter_mut().for_each(|x| *x = f64::from(*x as f32));
    for t in params.tensors_mut() {
        round(t.data_mut());
    }
    for m in &mut state.m {
        round(m);
    }
    for v in &mut state.v {
        round(v);
    }
}
