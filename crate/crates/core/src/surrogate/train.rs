//! Training loop (Adam/Adagrad on hand-derived gradients), the public
//! forward entry points, and finite-difference gradient checking.

use super::nn::*;
use crate::exec;
use crate::feeder::Feeder;
use crate::scenario::{pool_scenarios, ScenarioSet};
use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Adagrad,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub l1: f64,
    pub l2: f64,
    pub dropout: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::desk(),
            epochs: 400,
            batch: 64,
            lr: 1e-3,
            l1: 1e-4,
            l2: 1e-5,
            dropout: 0.01,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

/// One labeled instance: pooled scenario feature, first-stage bits, and
/// the expected second-stage cost in dollars.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub pooled: Array3<f64>,
    pub x_flat: Vec<f64>,
    pub label: f64,
}

/// Scenario embedding: pool the set, then run the encoder (GCN, norm,
/// positional, temporal stack, decoder). Deterministic and invariant to
/// scenario order.
pub fn encoder_forward(
    weights: &SurrogateWeights,
    feeder: &Feeder,
    set: &ScenarioSet,
) -> Result<Array1<f64>, NnError> {
    let pooled = pool_scenarios(set).map_err(|e| NnError::Shape(e.to_string()))?;
    let (a, d) = feeder.adjacency_with_self_loops();
    let s_norm = normalized_adjacency(&a, &d);
    encoder_forward_pooled(weights, &s_norm, &pooled.data)
}

/// Encoder on an already-pooled feature.
pub fn encoder_forward_pooled(
    weights: &SurrogateWeights,
    s_norm: &Array2<f64>,
    pooled: &Array3<f64>,
) -> Result<Array1<f64>, NnError> {
    let masks = DropoutMasks::none(weights);
    let zeros = vec![0.0; weights.x_dim];
    let tape = forward_tape(weights, s_norm, pooled, &zeros, &masks)?;
    Ok(tape.zeta)
}

/// Main evaluator: normalized cost prediction from embedding and
/// first-stage bits.
pub fn main_forward(main: &MlpStack, zeta: &Array1<f64>, x_flat: &[f64]) -> Result<f64, NnError> {
    let zdim = zeta.len();
    if main.input_dim() != zdim + x_flat.len() {
        return Err(NnError::Shape(format!(
            "main expects {} inputs, got {} + {}",
            main.input_dim(),
            zdim,
            x_flat.len()
        )));
    }
    let mut input = Array1::<f64>::zeros(main.input_dim());
    for (i, v) in zeta.iter().enumerate() {
        input[i] = *v;
    }
    for (i, v) in x_flat.iter().enumerate() {
        input[zdim + i] = *v;
    }
    Ok(main.forward(&input)[0])
}

/// Full surrogate prediction in dollars.
pub fn predict_cost(
    weights: &SurrogateWeights,
    feeder: &Feeder,
    set: &ScenarioSet,
    x_flat: &[f64],
) -> Result<f64, NnError> {
    let zeta = encoder_forward(weights, feeder, set)?;
    let psi = main_forward(&weights.main, &zeta, x_flat)?;
    Ok(weights.rescale_cost(psi))
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xD1B54A32D192ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl OptimizerState {
    fn new(n: usize) -> OptimizerState {
        OptimizerState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn apply(&mut self, kind: Optimizer, lr: f64, params: &mut [f64], grads: &[f64]) {
        const EPS: f64 = 1e-8;
        self.step += 1;
        match kind {
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                let bc1 = 1.0 - B1.powi(self.step as i32);
                let bc2 = 1.0 - B2.powi(self.step as i32);
                for i in 0..params.len() {
                    self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
                    self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    params[i] -= lr * mhat / (vhat.sqrt() + EPS);
                }
            }
            Optimizer::Adagrad => {
                for i in 0..params.len() {
                    self.v[i] += grads[i] * grads[i];
                    params[i] -= lr * grads[i] / (self.v[i].sqrt() + EPS);
                }
            }
        }
    }
}

/// Train the surrogate on labeled samples. Labels are normalized by their
/// own min/max (stored in the returned weights); loss is mean squared
/// error on the normalized output plus L1/L2 weight penalties. Returns
/// the weights and the per-epoch loss curve. Reproducible: the same seed
/// and config give identical weights regardless of worker count.
pub fn train(
    feeder: &Feeder,
    dataset: &[TrainSample],
    config: &TrainConfig,
) -> Result<(SurrogateWeights, Vec<f64>), NnError> {
    if dataset.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let n_buses = dataset[0].pooled.shape()[0];
    let horizon = dataset[0].pooled.shape()[1];
    let f_in = dataset[0].pooled.shape()[2];
    let x_dim = dataset[0].x_flat.len();
    for s in dataset {
        if s.pooled.shape() != [n_buses, horizon, f_in] || s.x_flat.len() != x_dim {
            return Err(NnError::Shape("inconsistent sample shapes in dataset".into()));
        }
    }
    if n_buses != feeder.num_buses() {
        return Err(NnError::Shape(format!(
            "dataset has {n_buses} buses, feeder {}",
            feeder.num_buses()
        )));
    }

    let (j_min, mut j_max) = dataset
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.label), hi.max(s.label))
        });
    if j_max - j_min < 1e-9 {
        // Degenerate label spread: pin the scale so targets sit at zero.
        j_max = j_min + 1.0;
    }
    let targets: Vec<f64> = dataset
        .iter()
        .map(|s| (s.label - j_min) / (j_max - j_min))
        .collect();

    let mut weights =
        SurrogateWeights::init(&config.arch, n_buses, horizon, x_dim, f_in, config.seed)?;
    weights.j_min = j_min;
    weights.j_max = j_max;

    let (a, d) = feeder.adjacency_with_self_loops();
    let s_norm = normalized_adjacency(&a, &d);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0xA5, 0));
    let mut opt = OptimizerState::new(weights.num_params());
    let mut flat = weights.to_flat();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch.max(1)) {
            // Per-sample gradients in parallel; summed in a fixed order.
            let results: Vec<Result<(Vec<f64>, f64), NnError>> =
                exec::map_collect(chunk.to_vec(), |idx| {
                    let sample = &dataset[idx];
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                        config.seed,
                        epoch as u64 + 1,
                        idx as u64 + 1,
                    ));
                    let masks = if config.dropout > 0.0 {
                        DropoutMasks::sample(&weights, config.dropout, &mut rng)
                    } else {
                        DropoutMasks::none(&weights)
                    };
                    let tape =
                        forward_tape(&weights, &s_norm, &sample.pooled, &sample.x_flat, &masks)?;
                    let err = tape.psi - targets[idx];
                    let mut grads = weights.zeros_like();
                    backward(&weights, &s_norm, &tape, &masks, err, &mut grads);
                    Ok((grads.to_flat(), 0.5 * err * err))
                });
            let mut grad_sum = vec![0.0; flat.len()];
            let mut loss_sum = 0.0;
            for r in results {
                let (g, l) = r?;
                for (acc, v) in grad_sum.iter_mut().zip(&g) {
                    *acc += v;
                }
                loss_sum += l;
            }
            let scale = 1.0 / chunk.len() as f64;
            for g in grad_sum.iter_mut() {
                *g *= scale;
            }
            // Weight penalties enter once per step.
            let mut pen = weights.zeros_like();
            weights.add_penalty_grads(&mut pen, config.l1, config.l2);
            for (acc, v) in grad_sum.iter_mut().zip(pen.to_flat()) {
                *acc += v;
            }
            opt.apply(config.optimizer, config.lr, &mut flat, &grad_sum);
            weights.set_flat(&flat);
            epoch_loss += loss_sum;
        }
        let loss = epoch_loss / dataset.len() as f64 + weights.weight_penalty(config.l1, config.l2);
        if !loss.is_finite() {
            return Err(NnError::Diverged { epoch, loss });
        }
        curve.push(loss);
    }

    // Record the embedding envelope over the training set.
    let zdim = weights.embedding_dim();
    let mut zmin = vec![f64::INFINITY; zdim];
    let mut zmax = vec![f64::NEG_INFINITY; zdim];
    for s in dataset {
        let zeta = encoder_forward_pooled(&weights, &s_norm, &s.pooled)?;
        for (i, v) in zeta.iter().enumerate() {
            zmin[i] = zmin[i].min(*v);
            zmax[i] = zmax[i].max(*v);
        }
    }
    weights.zeta_min = zmin;
    weights.zeta_max = zmax;

    Ok((weights, curve))
}

/// Outcome of a finite-difference gradient audit.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst relative error per parameter segment.
    pub per_segment: Vec<(String, f64)>,
    /// Smallest pre-activation magnitude seen in the forward pass.
    pub activation_margin: f64,
}

/// Smallest |pre-activation| across every ReLU in the tape.
pub fn activation_margin(tape: &Tape) -> f64 {
    let mut m = f64::INFINITY;
    for per_layer in &tape.gcn_pre {
        for arr in per_layer {
            for v in arr.iter() {
                m = m.min(v.abs());
            }
        }
    }
    for per_layer in &tape.conv_pre {
        for arr in per_layer {
            for v in arr.iter() {
                m = m.min(v.abs());
            }
        }
    }
    for (i, arr) in tape.dec_pre.iter().enumerate() {
        if i + 1 < tape.dec_pre.len() {
            for v in arr.iter() {
                m = m.min(v.abs());
            }
        }
    }
    for (i, arr) in tape.main_pre.iter().enumerate() {
        if i + 1 < tape.main_pre.len() {
            for v in arr.iter() {
                m = m.min(v.abs());
            }
        }
    }
    m
}

/// Compare the analytic gradient of `0.5 (psi - label)^2` against central
/// differences with step `1e-5`, checking every `stride`-th parameter.
/// Relative error per parameter: `|analytic - numeric| / (|analytic| + 1e-8)`.
pub fn grad_check(
    weights: &SurrogateWeights,
    s_norm: &Array2<f64>,
    pooled: &Array3<f64>,
    x_flat: &[f64],
    label: f64,
    stride: usize,
) -> Result<GradCheckReport, NnError> {
    const H: f64 = 1e-5;
    let masks = DropoutMasks::none(weights);
    let tape = forward_tape(weights, s_norm, pooled, x_flat, &masks)?;
    let margin = activation_margin(&tape);
    let mut grads = weights.zeros_like();
    backward(weights, s_norm, &tape, &masks, tape.psi - label, &mut grads);
    let analytic = grads.to_flat();

    let mut probe = weights.clone();
    let mut flat = weights.to_flat();
    let segments = weights.segments();
    let mut per_segment: Vec<(String, f64)> = segments.iter().map(|(n, _)| (n.clone(), 0.0)).collect();
    let mut max_rel: f64 = 0.0;
    let loss_of = |w: &SurrogateWeights| -> Result<f64, NnError> {
        let m = DropoutMasks::none(w);
        let t = forward_tape(w, s_norm, pooled, x_flat, &m)?;
        Ok(0.5 * (t.psi - label) * (t.psi - label))
    };
    let mut seg_of = Vec::with_capacity(flat.len());
    for (si, (_, len)) in segments.iter().enumerate() {
        seg_of.extend(std::iter::repeat(si).take(*len));
    }
    for i in (0..flat.len()).step_by(stride.max(1)) {
        let saved = flat[i];
        flat[i] = saved + H;
        probe.set_flat(&flat);
        let fp = loss_of(&probe)?;
        flat[i] = saved - H;
        probe.set_flat(&flat);
        let fm = loss_of(&probe)?;
        flat[i] = saved;
        let numeric = (fp - fm) / (2.0 * H);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + 1e-8);
        max_rel = max_rel.max(rel);
        let si = seg_of[i];
        if rel > per_segment[si].1 {
            per_segment[si].1 = rel;
        }
    }
    probe.set_flat(&flat);

    Ok(GradCheckReport {
        max_rel_error: max_rel,
        per_segment,
        activation_margin: margin,
    })
}
