//! Surrogate training and gradient correctness: finite-difference audits
//! per layer family, synthetic-function recovery, permutation invariance,
//! and reproducibility.

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vvo_core::feeder::presets;
use vvo_core::scenario::{pool_scenarios, sample_scenarios, synthetic_profiles, POOLED_FEATURES};
use vvo_core::surrogate::*;

fn small_arch() -> ArchConfig {
    ArchConfig {
        gcn: vec![5],
        temporal: vec![TemporalSpec {
            kernel: 3,
            channels: 4,
        }],
        decoder: vec![6, 3],
        main: vec![8, 4],
    }
}

fn random_instance(
    seed: u64,
    n: usize,
    horizon: usize,
    x_dim: usize,
) -> (SurrogateWeights, ndarray::Array2<f64>, Array3<f64>, Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = SurrogateWeights::init(&small_arch(), n, horizon, x_dim, POOLED_FEATURES, seed)
        .unwrap();
    // Random connected graph on n nodes: a path plus random chords.
    let mut a = ndarray::Array2::<f64>::eye(n);
    for i in 1..n {
        a[[i - 1, i]] = 1.0;
        a[[i, i - 1]] = 1.0;
    }
    for i in 0..n {
        for j in (i + 2)..n {
            if rng.gen::<f64>() < 0.3 {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    let mut d = ndarray::Array2::<f64>::zeros((n, n));
    for i in 0..n {
        d[[i, i]] = a.row(i).sum();
    }
    let s_norm = normalized_adjacency(&a, &d);
    let pooled = Array3::from_shape_fn((n, horizon, POOLED_FEATURES), |_| rng.gen_range(-1.0..1.0));
    let x: Vec<f64> = (0..x_dim).map(|_| rng.gen_range(0.0..1.0)).collect();
    let label = rng.gen_range(0.0..1.0);
    (weights, s_norm, pooled, x, label)
}

#[test]
fn gradients_match_central_differences_across_layers() {
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 10 {
        seed += 1;
        let (weights, s_norm, pooled, x, label) = random_instance(seed, 5, 6, 7);
        let report = grad_check(&weights, &s_norm, &pooled, &x, label, 1).unwrap();
        if report.activation_margin < 1e-4 {
            continue; // resample away from ReLU kinks
        }
        checked += 1;
        assert!(
            report.max_rel_error <= 1e-4,
            "seed {seed}: max rel error {} (margin {})",
            report.max_rel_error,
            report.activation_margin
        );
        // Every layer family is represented and individually passes.
        for family in ["gcn0.w", "temporal0.kernel", "decoder0.w", "main0.w", "layer_norm.gain", "positional"] {
            let (_, err) = report
                .per_segment
                .iter()
                .find(|(name, _)| name == family)
                .unwrap();
            assert!(*err <= 1e-4, "{family}: {err}");
        }
    }
}

#[test]
fn final_linear_layer_gradient_is_exact() {
    // The loss is exactly quadratic in the scalar head's parameters, so
    // central differences are exact up to roundoff there.
    let (weights, s_norm, pooled, x, label) = random_instance(77, 4, 6, 5);
    let report = grad_check(&weights, &s_norm, &pooled, &x, label, 1).unwrap();
    let head = format!("main{}.w", weights.main.layers.len() - 1);
    let (_, err) = report
        .per_segment
        .iter()
        .find(|(name, _)| name == &head)
        .unwrap();
    assert!(*err <= 1e-8, "head layer error {err}");
}

#[test]
fn zero_input_zeroes_first_layer_weight_gradients() {
    let (weights, s_norm, _, x, label) = random_instance(3, 5, 6, 7);
    let pooled = Array3::zeros((5, 6, POOLED_FEATURES));
    let masks = DropoutMasks::none(&weights);
    let tape = forward_tape(&weights, &s_norm, &pooled, &x, &masks).unwrap();
    let mut grads = weights.zeros_like();
    backward(&weights, &s_norm, &tape, &masks, tape.psi - label, &mut grads);
    for v in grads.gcn[0].w.iter() {
        assert_eq!(*v, 0.0);
    }
}

#[test]
fn encoder_is_permutation_invariant_over_scenarios() {
    let f = presets::toy10();
    let base = synthetic_profiles(&f, 5, 30.0, 1.0);
    let set = sample_scenarios(&base, 6, 4, 0.3).unwrap();
    let layout = vvo_core::vvo::FirstStageLayout::new(&f, 5);
    let weights =
        SurrogateWeights::init(&ArchConfig::desk(), f.num_buses(), 5, layout.len(), POOLED_FEATURES, 9)
            .unwrap();
    let zeta = encoder_forward(&weights, &f, &set).unwrap();
    let permuted = set.subset(&[5, 0, 3, 1, 4, 2]).unwrap();
    let zeta_p = encoder_forward(&weights, &f, &permuted).unwrap();
    assert_eq!(zeta, zeta_p);
    // Duplicating a single scenario leaves the embedding unchanged.
    let single = set.single(0);
    let dup = vvo_core::scenario::ScenarioSet::uniform(vec![
        set.scenarios[0].clone();
        10
    ])
    .unwrap();
    let z1 = encoder_forward(&weights, &f, &single).unwrap();
    let z10 = encoder_forward(&weights, &f, &dup).unwrap();
    assert_eq!(z1, z10);
}

#[test]
fn encoder_matches_stagewise_composition() {
    let f = presets::toy10();
    let base = synthetic_profiles(&f, 5, 30.0, 1.0);
    let set = sample_scenarios(&base, 4, 8, 0.2).unwrap();
    let weights =
        SurrogateWeights::init(&ArchConfig::desk(), f.num_buses(), 5, 3, POOLED_FEATURES, 21)
            .unwrap();

    let zeta = encoder_forward(&weights, &f, &set).unwrap();

    // Stage-wise recomputation through the public layer entry points.
    let pooled = pool_scenarios(&set).unwrap();
    let slices = vvo_core::scenario::reshape_temporal(&pooled);
    let (a, dmat) = f.adjacency_with_self_loops();
    let n = f.num_buses();
    let d_gcn = weights.layer_norm.gain.len();
    let horizon = 5;
    let mut per_t = Vec::new();
    for xi in &slices {
        let mut h = xi.clone();
        for layer in &weights.gcn {
            h = gcn_forward(layer, &a, &dmat, &h).unwrap();
        }
        per_t.push(h);
    }
    let mut flat = Vec::new();
    let t_out = weights.conv_out_len();
    let mut flat_all = vec![0.0; 0];
    for node in 0..n {
        let mut seq = ndarray::Array2::<f64>::zeros((horizon, d_gcn));
        for (t, h) in per_t.iter().enumerate() {
            let row = h.row(node);
            let mean = row.sum() / d_gcn as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d_gcn as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for fch in 0..d_gcn {
                seq[[t, fch]] = weights.layer_norm.gain[fch] * (row[fch] - mean) * inv
                    + weights.layer_norm.bias[fch]
                    + weights.positional[[t, fch]];
            }
        }
        let z = temporal_forward(&weights.temporal, &seq).unwrap();
        assert_eq!(z.nrows(), t_out);
        for t in 0..z.nrows() {
            for c in 0..z.ncols() {
                flat_all.push(z[[t, c]]);
            }
        }
    }
    flat.append(&mut flat_all);
    let zeta2 = weights.decoder.forward(&Array1::from_vec(flat));
    for (x, y) in zeta.iter().zip(zeta2.iter()) {
        assert!((x - y).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn main_forward_rescale_endpoints() {
    let mut weights =
        SurrogateWeights::init(&small_arch(), 4, 5, 3, POOLED_FEATURES, 2).unwrap();
    weights.j_min = 100.0;
    weights.j_max = 400.0;
    // Zero weights: psi = 0 regardless of input.
    for l in &mut weights.main.layers {
        l.w.fill(0.0);
        l.b.fill(0.0);
    }
    let zeta = Array1::zeros(weights.embedding_dim());
    let psi = main_forward(&weights.main, &zeta, &[1.0, 0.0, 1.0]).unwrap();
    assert_eq!(psi, 0.0);
    assert_eq!(weights.rescale_cost(psi), 100.0);
    //

    // Bias the head to 1: J = j_max.
    let last = weights.main.layers.len() - 1;
    weights.main.layers[last].b[0] = 1.0;
    let psi = main_forward(&weights.main, &zeta, &[1.0, 0.0, 1.0]).unwrap();
    assert_eq!(weights.rescale_cost(psi), 400.0);
}

#[test]
fn main_forward_matches_layer_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let weights = SurrogateWeights::init(&small_arch(), 4, 5, 6, POOLED_FEATURES, 5).unwrap();
    let zeta = Array1::from_shape_fn(weights.embedding_dim(), |_| rng.gen_range(-1.0..1.0));
    let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
    let psi = main_forward(&weights.main, &zeta, &x).unwrap();
    // Independent nested-loop evaluation.
    let mut h: Vec<f64> = zeta.iter().copied().chain(x.iter().copied()).collect();
    for (li, layer) in weights.main.layers.iter().enumerate() {
        let mut next = vec![0.0; layer.w.nrows()];
        for r in 0..layer.w.nrows() {
            let mut acc = layer.b[r];
            for c in 0..layer.w.ncols() {
                acc += layer.w[[r, c]] * h[c];
            }
            next[r] = if li + 1 < weights.main.layers.len() {
                acc.max(0.0)
            } else {
                acc
            };
        }
        h = next;
    }
    assert!((psi - h[0]).abs() < 1e-10);
}

#[test]
fn main_forward_is_piecewise_linear() {
    // Two inputs in the same activation region interpolate linearly.
    let weights = SurrogateWeights::init(&small_arch(), 4, 5, 6, POOLED_FEATURES, 13).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut found = 0;
    while found < 5 {
        let zeta = Array1::from_shape_fn(weights.embedding_dim(), |_| rng.gen_range(-1.0..1.0));
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x2: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)).collect();
        // Same activation pattern check via sign of hidden pre-activations.
        let pattern = |xs: &[f64]| {
            let mut h: Vec<f64> = zeta.iter().copied().chain(xs.iter().copied()).collect();
            let mut signs = Vec::new();
            for (li, layer) in weights.main.layers.iter().enumerate() {
                let mut next = vec![0.0; layer.w.nrows()];
                for r in 0..layer.w.nrows() {
                    let mut acc = layer.b[r];
                    for c in 0..layer.w.ncols() {
                        acc += layer.w[[r, c]] * h[c];
                    }
                    if li + 1 < weights.main.layers.len() {
                        signs.push(acc > 0.0);
                        next[r] = acc.max(0.0);
                    } else {
                        next[r] = acc;
                    }
                }
                h = next;
            }
            signs
        };
        if pattern(&x) != pattern(&x2) {
            continue;
        }
        found += 1;
        let xm: Vec<f64> = x.iter().zip(&x2).map(|(a, b)| 0.5 * (a + b)).collect();
        let f1 = main_forward(&weights.main, &zeta, &x).unwrap();
        let f2 = main_forward(&weights.main, &zeta, &x2).unwrap();
        let fm = main_forward(&weights.main, &zeta, &xm).unwrap();
        assert!((fm - 0.5 * (f1 + f2)).abs() < 1e-9, "{fm} vs {}", 0.5 * (f1 + f2));
    }
}

fn synthetic_dataset(n_samples: usize, seed: u64) -> (vvo_core::feeder::Feeder, Vec<TrainSample>) {
    let f = presets::ring4();
    let horizon = 4;
    let base = synthetic_profiles(&f, horizon, 50.0, 1.0);
    let layout = vvo_core::vvo::FirstStageLayout::new(&f, horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for i in 0..n_samples {
        let set = sample_scenarios(&base, 3, seed * 1000 + i as u64, 0.3).unwrap();
        let pooled = pool_scenarios(&set).unwrap();
        let x: Vec<f64> = (0..layout.len())
            .map(|_| if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 })
            .collect();
        // Linear synthetic label over x bits and the mean pooled signal.
        let mean_sig: f64 = pooled.data.iter().sum::<f64>() / pooled.data.len() as f64;
        let label = 40.0 + 25.0 * x.iter().sum::<f64>() + 400.0 * mean_sig;
        samples.push(TrainSample {
            pooled: pooled.data,
            x_flat: x,
            label,
        });
    }
    (f, samples)
}

#[test]
fn constant_labels_are_fit_exactly() {
    let (f, mut samples) = synthetic_dataset(24, 7);
    for s in &mut samples {
        s.label = 123.0;
    }
    let config = TrainConfig {
        epochs: 200,
        batch: 8,
        dropout: 0.0,
        l1: 0.0,
        l2: 0.0,
        arch: small_arch(),
        ..Default::default()
    };
    let (weights, _) = train(&f, &samples, &config).unwrap();
    let (a, d) = f.adjacency_with_self_loops();
    let s_norm = normalized_adjacency(&a, &d);
    for s in &samples {
        let zeta = encoder_forward_pooled(&weights, &s_norm, &s.pooled).unwrap();
        let psi = main_forward(&weights.main, &zeta, &s.x_flat).unwrap();
        let cost = weights.rescale_cost(psi);
        assert!((cost - 123.0).abs() < 1e-3, "predicted {cost}");
    }
}

#[test]
fn linear_synthetic_labels_reach_small_loss() {
    let (f, samples) = synthetic_dataset(48, 3);
    let config = TrainConfig {
        epochs: 800,
        batch: 16,
        dropout: 0.0,
        l1: 0.0,
        l2: 0.0,
        lr: 3e-3,
        arch: small_arch(),
        ..Default::default()
    };
    let (_, curve) = train(&f, &samples, &config).unwrap();
    let last = *curve.last().unwrap();
    assert!(last <= 1e-4, "final loss {last}");
}

#[test]
fn loss_moving_average_decreases() {
    let (f, samples) = synthetic_dataset(32, 11);
    let config = TrainConfig {
        epochs: 300,
        batch: 32,
        dropout: 0.0,
        arch: small_arch(),
        ..Default::default()
    };
    let (_, curve) = train(&f, &samples, &config).unwrap();
    let window = 50;
    let ma: Vec<f64> = curve
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    for pair in ma.windows(2) {
        assert!(
            pair[1] <= pair[0] + 1e-9,
            "moving average increased: {} -> {}",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn training_is_reproducible() {
    let (f, samples) = synthetic_dataset(16, 19);
    let config = TrainConfig {
        epochs: 40,
        batch: 8,
        arch: small_arch(),
        seed: 42,
        ..Default::default()
    };
    let (w1, c1) = train(&f, &samples, &config).unwrap();
    let (w2, c2) = train(&f, &samples, &config).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(w1.to_flat(), w2.to_flat());
    assert_eq!(weights_to_json(&w1), weights_to_json(&w2));
}

#[test]
fn adagrad_also_trains() {
    let (f, mut samples) = synthetic_dataset(16, 23);
    for s in &mut samples {
        s.label = 55.0;
    }
    let config = TrainConfig {
        epochs: 150,
        batch: 8,
        dropout: 0.0,
        l1: 0.0,
        l2: 0.0,
        lr: 5e-2,
        optimizer: Optimizer::Adagrad,
        arch: small_arch(),
        ..Default::default()
    };
    let (weights, curve) = train(&f, &samples, &config).unwrap();
    assert!(curve.last().unwrap() < &1e-4, "loss {}", curve.last().unwrap());
    let _ = weights;
}
