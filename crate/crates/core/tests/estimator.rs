mod common;

use common::{max_abs_diff, ref_attention, ref_estimator, ref_multiscale, ref_pyramid, rng, uniform_vec, Map};
use msdnet::estimator::{Estimator, EstimatorConfig};
use msdnet::nn::ParamStore;
use msdnet::tensor::{gradient_check_with, GradCheckOptions, Stencil, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::Rng;

fn built(cfg: EstimatorConfig, seed: u64) -> (Estimator, ParamStore) {
    let mut store = ParamStore::new();
    let est = Estimator::build(cfg, &mut store, "est");
    store.init_uniform(seed);
    let mut r = rng(seed ^ 0xb1a5);
    for t in store.tensors_mut() {
        if t.rank() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.1..0.1));
        }
    }
    (est, store)
}

fn micro(bands: usize) -> EstimatorConfig {
    EstimatorConfig {
        bands,
        base_channels: 4,
        block_growth: 1,
        ..EstimatorConfig::default()
    }
}

fn random_map(seed: u64, c: usize, h: usize, w: usize) -> Map {
    Map::new(c, h, w, uniform_vec(&mut rng(seed), c * h * w, 0.0, 1.0))
}

fn tensor(m: &Map) -> Tensor {
    Tensor::new(vec![m.c, m.h, m.w], m.d.clone()).unwrap()
}

fn run(est: &Estimator, store: &ParamStore, x: &Map, f: impl Fn(&Estimator, &mut Tape, &[Var], Var) -> Var) -> Tensor {
    let mut tape = Tape::new();
    let vars = store.register(&mut tape);
    let xv = tape.leaf(tensor(x));
    let out = f(est, &mut tape, &vars, xv);
    tape.value(out).clone()
}

#[test]
fn multiscale_of_zero_input_with_zero_biases_is_zero() {
    let mut store = ParamStore::new();
    let est = Estimator::build(micro(1), &mut store, "est");
    store.init_uniform(1);
    let x = Map::new(4, 8, 8, vec![0.0; 256]);
    for m in 0..3 {
        let y = run(&est, &store, &x, |e, t, v, x| e.multiscale_forward(t, v, x, m).unwrap());
        assert_eq!(y.shape(), &[4, 8, 8]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn multiscale_matches_hand_composition() {
    let cfg = EstimatorConfig {
        bands: 1,
        base_channels: 1,
        block_growth: 1,
        pyramid_bins: vec![1],
        ..EstimatorConfig::default()
    };
    let (est, mut store) = built(cfg, 4);
    // tiny weights keep every block in its linear regime
    for t in store.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 0.1);
    }
    let x = random_map(5, 1, 4, 4);
    for m in 0..3 {
        let y = run(&est, &store, &x, |e, t, v, x| e.multiscale_forward(t, v, x, m).unwrap());
        let expect = ref_multiscale(&x, &store, "est", m, 6);
        assert!(max_abs_diff(y.data(), &expect.d) < 1e-12, "module {m}");
    }
}

#[test]
fn multiscale_rejects_wrong_channels_and_modules() {
    let (est, store) = built(micro(1), 1);
    let mut tape = Tape::new();
    let vars = store.register(&mut tape);
    let x = tape.leaf(Tensor::zeros(&[3, 8, 8]));
    assert!(est.multiscale_forward(&mut tape, &vars, x, 0).is_err());
    let x = tape.leaf(Tensor::zeros(&[4, 8, 8]));
    assert!(est.multiscale_forward(&mut tape, &vars, x, 3).is_err());
}

#[test]
fn pyramid_keeps_constant_maps_constant() {
    let (est, store) = built(micro(1), 2);
    let x = Map::new(4, 12, 12, (0..4).flat_map(|c| vec![0.2 * c as f64 + 0.1; 144]).collect());
    let y = run(&est, &store, &x, |e, t, v, x| e.pyramid_forward(t, v, x).unwrap());
    assert_eq!(y.shape(), &[4, 12, 12]);
    for plane in y.data().chunks(144) {
        assert!(plane.iter().all(|&v| (v - plane[0]).abs() < 1e-12));
    }
}

#[test]
fn pyramid_matches_direct_pooling() {
    let (est, store) = built(micro(1), 3);
    for (h, w) in [(8, 8), (9, 13), (12, 10)] {
        let x = random_map(h as u64 * 31 + w as u64, 4, h, w);
        let y = run(&est, &store, &x, |e, t, v, x| e.pyramid_forward(t, v, x).unwrap());
        let expect = ref_pyramid(&x, &store, "est", &[1, 2, 3, 6]);
        assert!(max_abs_diff(y.data(), &expect.d) < 1e-12);
    }
}

#[test]
fn single_bin_pyramid_is_affine_of_the_mean() {
    let cfg = EstimatorConfig {
        base_channels: 2,
        pyramid_bins: vec![1],
        ..micro(1)
    };
    let (est, store) = built(cfg, 9);
    let x = random_map(10, 2, 6, 7);
    let y = run(&est, &store, &x, |e, t, v, x| e.pyramid_forward(t, v, x).unwrap());
    let wt = store.get(store.find("est.pyramid1.weight").unwrap());
    let bt = store.get(store.find("est.pyramid1.bias").unwrap());
    let means: Vec<f64> = x.d.chunks(42).map(|p| p.iter().sum::<f64>() / 42.0).collect();
    for co in 0..2 {
        let v = bt.data()[co] + wt.data()[co * 2] * means[0] + wt.data()[co * 2 + 1] * means[1];
        assert!(y.data()[co * 42..(co + 1) * 42].iter().all(|&o| (o - v).abs() < 1e-12));
    }
}

#[test]
fn pyramid_rejects_bins_larger_than_the_map() {
    let (est, store) = built(micro(1), 3);
    let mut tape = Tape::new();
    let vars = store.register(&mut tape);
    let x = tape.leaf(Tensor::zeros(&[4, 5, 8]));
    assert!(est.pyramid_forward(&mut tape, &vars, x).is_err());
}

#[test]
fn saturated_gates_pass_the_map_through() {
    let (est, mut store) = built(micro(1), 6);
    let bias = store.find("est.attn.fc2.bias").unwrap();
    store.get_mut(bias).data_mut().fill(50.0);
    let p = random_map(7, 16, 8, 8);
    let y = run(&est, &store, &p, |e, t, v, x| e.channel_attention(t, v, x).unwrap());
    assert!(max_abs_diff(y.data(), &p.d) < 1e-12);
}

#[test]
fn gates_lie_strictly_inside_the_unit_interval() {
    let (est, store) = built(micro(1), 8);
    let p = random_map(9, 16, 8, 8);
    let s = run(&est, &store, &p, |e, t, v, x| e.attention_gates(t, v, x).unwrap());
    assert_eq!(s.shape(), &[16]);
    assert!(s.data().iter().all(|&g| g > 0.0 && g < 1.0));
}

#[test]
fn four_channel_attention_by_hand() {
    let cfg = EstimatorConfig {
        base_channels: 1,
        pyramid_bins: vec![1],
        ..micro(1)
    };
    let mut store = ParamStore::new();
    let est = Estimator::build(cfg, &mut store, "est");
    let set = |store: &mut ParamStore, name: &str, vals: &[f64]| {
        let id = store.find(name).unwrap();
        store.get_mut(id).data_mut().copy_from_slice(vals);
    };
    // fc1: 4 -> 1, fc2: 1 -> 4
    set(&mut store, "est.attn.fc1.weight", &[1.0, -1.0, 0.5, 0.0]);
    set(&mut store, "est.attn.fc1.bias", &[0.25]);
    set(&mut store, "est.attn.fc2.weight", &[1.0, -2.0, 0.0, 3.0]);
    set(&mut store, "est.attn.fc2.bias", &[0.0, 0.0, 1.0, -1.0]);
    #[rustfmt::skip]
    let p = Map::new(4, 1, 2, vec![
        1.0, 3.0,
        2.0, -1.0,
        -4.0, 0.0,
        5.0, 5.0,
    ]);
    // V = [3, 2, 0, 5]; hidden = relu(3 - 2 + 0 + 0.25) = 1.25
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let s = [sig(1.25), sig(-2.5), sig(1.0), sig(2.75)];
    let y = run(&est, &store, &p, |e, t, v, x| e.channel_attention(t, v, x).unwrap());
    for (i, &v) in y.data().iter().enumerate() {
        assert!((v - s[i / 2] * p.d[i]).abs() < 1e-15);
    }
    let (oracle, gates) = ref_attention(&p, &store, "est");
    assert!(max_abs_diff(&gates, &s) < 1e-15);
    assert!(max_abs_diff(y.data(), &oracle.d) < 1e-15);
}

#[test]
fn attention_rejects_wrong_channel_count() {
    let (est, store) = built(micro(1), 1);
    let mut tape = Tape::new();
    let vars = store.register(&mut tape);
    let p = tape.leaf(Tensor::zeros(&[12, 8, 8]));
    assert!(est.channel_attention(&mut tape, &vars, p).is_err());
}

#[test]
fn estimate_noise_matches_composed_oracle() {
    for seed in 0..3 {
        let cfg = micro(1 + seed as usize);
        let (est, store) = built(cfg.clone(), seed);
        let y = random_map(100 + seed, cfg.bands, 8, 8);
        let out = run(&est, &store, &y, |e, t, v, x| e.forward(t, v, x).unwrap());
        assert_eq!(out.shape(), &[cfg.bands, 8, 8]);
        let expect = ref_estimator(&y, &store, "est", &cfg);
        assert!(max_abs_diff(out.data(), &expect.d) < 1e-12);
    }
}

#[test]
fn estimate_noise_input_contract() {
    let (est, store) = built(micro(2), 1);
    let mut tape = Tape::new();
    let vars = store.register(&mut tape);
    let small = tape.leaf(Tensor::zeros(&[2, 5, 8]));
    assert!(est.forward(&mut tape, &vars, small).is_err());
    let bands = tape.leaf(Tensor::zeros(&[3, 8, 8]));
    assert!(est.forward(&mut tape, &vars, bands).is_err());
}

#[test]
fn doubling_the_spatial_size_keeps_parameter_shapes() {
    let (est, store) = built(micro(2), 4);
    let shapes: Vec<Vec<usize>> = store.iter().map(|(_, t)| t.shape().to_vec()).collect();
    for hw in [8, 16, 32] {
        let y = random_map(hw as u64, 2, hw, hw);
        let out = run(&est, &store, &y, |e, t, v, x| e.forward(t, v, x).unwrap());
        assert_eq!(out.shape(), &[2, hw, hw]);
    }
    let mut other = ParamStore::new();
    Estimator::build(micro(2), &mut other, "est");
    let again: Vec<Vec<usize>> = other.iter().map(|(_, t)| t.shape().to_vec()).collect();
    assert_eq!(shapes, again);
}

#[test]
fn zeroed_projection_gives_zero_estimate() {
    let (est, mut store) = built(micro(1), 5);
    for name in ["est.head.weight", "est.head.bias"] {
        let id = store.find(name).unwrap();
        store.get_mut(id).data_mut().fill(0.0);
    }
    let y = random_map(6, 1, 8, 8);
    let out = run(&est, &store, &y, |e, t, v, x| e.forward(t, v, x).unwrap());
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn default_config_layout() {
    let cfg = EstimatorConfig::default();
    assert_eq!(cfg.kernel_sizes, vec![3, 5, 7]);
    assert_eq!(cfg.blocks_per_module, 6);
    assert_eq!(cfg.pyramid_bins, vec![1, 2, 3, 6]);
    assert_eq!(cfg.fused_channels(), 4 * cfg.base_channels);
    let mut store = ParamStore::new();
    let est = Estimator::build(cfg.clone(), &mut store, "est");
    assert_eq!(est.modules.len(), 3);
    assert!(est.modules.iter().all(|m| m.blocks.len() == 6));
    let fc1 = store.get(est.fc1.weight).shape().to_vec();
    let fc2 = store.get(est.fc2.weight).shape().to_vec();
    assert_eq!(fc1, vec![16, 64]);
    assert_eq!(fc2, vec![64, 16]);
    assert_eq!(store.get(est.head.weight).shape(), &[1, 64, 1, 1]);
}

#[test]
fn config_validation() {
    assert!(EstimatorConfig::default().validate().is_ok());
    let even = EstimatorConfig {
        kernel_sizes: vec![3, 4],
        ..EstimatorConfig::default()
    };
    assert!(even.validate().is_err());
    let zero = EstimatorConfig {
        block_growth: 0,
        ..EstimatorConfig::default()
    };
    assert!(zero.validate().is_err());
}

#[test]
fn estimate_noise_gradients_match_finite_differences() {
    let cfg = micro(1);
    for seed in 0..3 {
        let (est, store) = built(cfg.clone(), 40 + seed);
        let y = random_map(50 + seed, 1, 8, 8);
        let mut inputs: Vec<Tensor> = store.iter().map(|(_, t)| t.clone()).collect();
        inputs.push(tensor(&y));
        let weights = Tensor::new(vec![1, 8, 8], uniform_vec(&mut rng(seed), 64, -1.0, 1.0)).unwrap();
        let n = store.len();
        let f = |tape: &mut Tape, v: &[Var]| {
            let s = est.forward(tape, &v[..n], v[n])?;
            let w = tape.leaf(weights.clone());
            let p = tape.mul(s, w)?;
            Ok(tape.sum(p))
        };
        let opts = GradCheckOptions {
            eps: 1e-3,
            max_coords_per_input: Some(3),
            seed,
            step_cuts: 5,
            stencil: Stencil::FivePoint,
        };
        let report = gradient_check_with(&f, &inputs, &opts, &Tape::new).unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimate_is_nonnegative(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let (est, store) = built(micro(1), seed);
        let mut y = random_map(seed.wrapping_add(1), 1, 8, 8);
        y.d.iter_mut().for_each(|v| *v = (*v - 0.5) * scale);
        let out = run(&est, &store, &y, |e, t, v, x| e.forward(t, v, x).unwrap());
        prop_assert!(out.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}
