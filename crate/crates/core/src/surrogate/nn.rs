//! Network definition, forward evaluation, and hand-derived backprop.
//!
//! The scenario encoder runs a GCN over the feeder graph at every period,
//! layer-normalizes per node, adds a learnable positional embedding over
//! time, pushes each node's sequence through valid 1-D convolutions,
//! flattens, and decodes to the embedding. The main evaluator is a plain
//! ReLU MLP over `[embedding; first-stage bits]` with a linear scalar head.
//!
//! Everything is f64 and deterministic. Backward passes mirror the forward
//! code exactly and are validated against central differences by
//! `grad_check`.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("horizon {horizon} too short for temporal kernels needing {needed}")]
    HorizonTooShort { horizon: usize, needed: usize },
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("weights io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    /// (in_features, out_features)
    pub w: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalConvLayer {
    /// (kernel, in_channels, out_channels)
    pub kernel: Array3<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// (out, in)
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Dense stack: ReLU on every layer except the last, which stays linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpStack {
    pub layers: Vec<DenseLayer>,
}

impl MlpStack {
    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    /// Plain forward pass (no dropout).
    pub fn forward(&self, input: &Array1<f64>) -> Array1<f64> {
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.w.dot(&h) + &layer.b;
            if li != last {
                pre.mapv_inplace(|v| v.max(0.0));
            }
            h = pre;
        }
        h
    }
}

/// Architecture hyperparameters. `decoder` and `main` list hidden widths;
/// the decoder's final entry is the embedding dimension, the main stack
/// always ends in a scalar head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub gcn: Vec<usize>,
    pub temporal: Vec<TemporalSpec>,
    pub decoder: Vec<usize>,
    pub main: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalSpec {
    pub kernel: usize,
    pub channels: usize,
}

impl ArchConfig {
    /// Desk-scale default, sized for toy feeders and MILP embedding.
    pub fn desk() -> ArchConfig {
        ArchConfig {
            gcn: vec![16],
            temporal: vec![TemporalSpec {
                kernel: 4,
                channels: 16,
            }],
            decoder: vec![16, 8],
            main: vec![32, 16],
        }
    }

    /// Full-size profile.
    pub fn paper() -> ArchConfig {
        ArchConfig {
            gcn: vec![128, 64],
            temporal: vec![TemporalSpec {
                kernel: 4,
                channels: 64,
            }],
            decoder: vec![64, 32],
            main: vec![128, 64, 32],
        }
    }
}

/// Complete parameter set plus the cost-normalization constants and the
/// empirical embedding ranges recorded at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateWeights {
    pub gcn: Vec<GcnLayer>,
    pub layer_norm: LayerNorm,
    /// (horizon, gcn-out) additive positional embedding.
    pub positional: Array2<f64>,
    pub temporal: Vec<TemporalConvLayer>,
    pub decoder: MlpStack,
    pub main: MlpStack,
    /// Cost rescale: J(psi) = psi * (j_max - j_min) + j_min.
    pub j_min: f64,
    pub j_max: f64,
    /// Per-dimension embedding range observed over the training set.
    pub zeta_min: Vec<f64>,
    pub zeta_max: Vec<f64>,
    pub num_buses: usize,
    pub horizon: usize,
    pub x_dim: usize,
    pub feature_dim: usize,
}

impl SurrogateWeights {
    pub fn embedding_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn rescale_cost(&self, psi: f64) -> f64 {
        psi * (self.j_max - self.j_min) + self.j_min
    }

    /// Output length of the temporal stack for this horizon.
    pub fn conv_out_len(&self) -> usize {
        let shrink: usize = self.temporal.iter().map(|l| l.kernel.shape()[0] - 1).sum();
        self.horizon - shrink
    }

    /// Initialize with uniform Glorot weights from a seeded stream.
    pub fn init(
        arch: &ArchConfig,
        num_buses: usize,
        horizon: usize,
        x_dim: usize,
        feature_dim: usize,
        seed: u64,
    ) -> Result<SurrogateWeights, NnError> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let glorot2 = |rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let s = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-s..s))
        };

        if arch.gcn.is_empty() || arch.decoder.is_empty() || arch.temporal.is_empty() {
            return Err(NnError::Shape("architecture lists must be non-empty".into()));
        }
        let needed: usize = arch.temporal.iter().map(|l| l.kernel - 1).sum::<usize>() + 1;
        if horizon < needed {
            return Err(NnError::HorizonTooShort {
                horizon,
                needed,
            });
        }

        let mut gcn = Vec::new();
        let mut d_in = feature_dim;
        for &d_out in &arch.gcn {
            gcn.push(GcnLayer {
                w: glorot2(d_in, d_out, &mut rng),
            });
            d_in = d_out;
        }
        let d_gcn = d_in;
        let layer_norm = LayerNorm {
            gain: Array1::ones(d_gcn),
            bias: Array1::zeros(d_gcn),
        };
        let positional = Array2::from_shape_fn((horizon, d_gcn), |_| rng.gen_range(-0.01..0.01));

        let mut temporal = Vec::new();
        let mut c_in = d_gcn;
        let mut t_len = horizon;
        for spec in &arch.temporal {
            let s = (6.0 / (spec.kernel * c_in + spec.channels) as f64).sqrt();
            temporal.push(TemporalConvLayer {
                kernel: Array3::from_shape_fn((spec.kernel, c_in, spec.channels), |_| {
                    rng.gen_range(-s..s)
                }),
                bias: Array1::zeros(spec.channels),
            });
            c_in = spec.channels;
            t_len = t_len - spec.kernel + 1;
        }

        let flat_dim = num_buses * t_len * c_in;
        let mut decoder_layers = Vec::new();
        let mut din = flat_dim;
        for &dout in &arch.decoder {
            decoder_layers.push(DenseLayer {
                w: glorot2(dout, din, &mut rng),
                b: Array1::zeros(dout),
            });
            din = dout;
        }
        let zeta_dim = din;

        let mut main_layers = Vec::new();
        let mut min = zeta_dim + x_dim;
        for &mout in &arch.main {
            main_layers.push(DenseLayer {
                w: glorot2(mout, min, &mut rng),
                b: Array1::zeros(mout),
            });
            min = mout;
        }
        main_layers.push(DenseLayer {
            w: glorot2(1, min, &mut rng),
            b: Array1::zeros(1),
        });

        Ok(SurrogateWeights {
            gcn,
            layer_norm,
            positional,
            temporal,
            decoder: MlpStack {
                layers: decoder_layers,
            },
            main: MlpStack {
                layers: main_layers,
            },
            j_min: 0.0,
            j_max: 1.0,
            zeta_min: vec![0.0; zeta_dim],
            zeta_max: vec![0.0; zeta_dim],
            num_buses,
            horizon,
            x_dim,
            feature_dim,
        })
    }

    /// Zero-valued clone with the same shapes (gradient accumulator).
    pub fn zeros_like(&self) -> SurrogateWeights {
        let mut z = self.clone();
        for l in &mut z.gcn {
            l.w.fill(0.0);
        }
        z.layer_norm.gain.fill(0.0);
        z.layer_norm.bias.fill(0.0);
        z.positional.fill(0.0);
        for l in &mut z.temporal {
            l.kernel.fill(0.0);
            l.bias.fill(0.0);
        }
        for l in z.decoder.layers.iter_mut().chain(z.main.layers.iter_mut()) {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        z
    }

    /// Named parameter segments in flat order: (label, length).
    pub fn segments(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (i, l) in self.gcn.iter().enumerate() {
            out.push((format!("gcn{i}.w"), l.w.len()));
        }
        out.push(("layer_norm.gain".into(), self.layer_norm.gain.len()));
        out.push(("layer_norm.bias".into(), self.layer_norm.bias.len()));
        out.push(("positional".into(), self.positional.len()));
        for (i, l) in self.temporal.iter().enumerate() {
            out.push((format!("temporal{i}.kernel"), l.kernel.len()));
            out.push((format!("temporal{i}.bias"), l.bias.len()));
        }
        for (i, l) in self.decoder.layers.iter().enumerate() {
            out.push((format!("decoder{i}.w"), l.w.len()));
            out.push((format!("decoder{i}.b"), l.b.len()));
        }
        for (i, l) in self.main.layers.iter().enumerate() {
            out.push((format!("main{i}.w"), l.w.len()));
            out.push((format!("main{i}.b"), l.b.len()));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.segments().iter().map(|(_, n)| n).sum()
    }

    /// Flatten all parameters in segment order (row-major within arrays).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.gcn {
            out.extend(l.w.iter());
        }
        out.extend(self.layer_norm.gain.iter());
        out.extend(self.layer_norm.bias.iter());
        out.extend(self.positional.iter());
        for l in &self.temporal {
            out.extend(l.kernel.iter());
            out.extend(l.bias.iter());
        }
        for l in self.decoder.layers.iter().chain(self.main.layers.iter()) {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    /// Write a flat parameter vector back into the structure.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter().copied();
        let fill1 = |a: &mut Array1<f64>, it: &mut dyn Iterator<Item = f64>| {
            for v in a.iter_mut() {
                *v = it.next().expect("flat vector long enough");
            }
        };
        for l in &mut self.gcn {
            for v in l.w.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        fill1(&mut self.layer_norm.gain, &mut it);
        fill1(&mut self.layer_norm.bias, &mut it);
        for v in self.positional.iter_mut() {
            *v = it.next().unwrap();
        }
        for l in &mut self.temporal {
            for v in l.kernel.iter_mut() {
                *v = it.next().unwrap();
            }
            fill1(&mut l.bias, &mut it);
        }
        for l in self
            .decoder
            .layers
            .iter_mut()
            .chain(self.main.layers.iter_mut())
        {
            for v in l.w.iter_mut() {
                *v = it.next().unwrap();
            }
            fill1(&mut l.b, &mut it);
        }
    }

    /// L1 and L2 penalty over weight matrices and conv kernels (biases,
    /// normalization, and positional terms are exempt).
    pub fn weight_penalty(&self, l1: f64, l2: f64) -> f64 {
        let mut p = 0.0;
        let mut add = |v: f64| p += l1 * v.abs() + l2 * v * v;
        for l in &self.gcn {
            l.w.iter().copied().for_each(&mut add);
        }
        for l in &self.temporal {
            l.kernel.iter().copied().for_each(&mut add);
        }
        for l in self.decoder.layers.iter().chain(self.main.layers.iter()) {
            l.w.iter().copied().for_each(&mut add);
        }
        p
    }

    /// Add penalty subgradients into a gradient accumulator.
    pub fn add_penalty_grads(&self, grads: &mut SurrogateWeights, l1: f64, l2: f64) {
        fn pen(w: f64, l1: f64, l2: f64) -> f64 {
            l1 * w.signum() + 2.0 * l2 * w
        }
        for (l, g) in self.gcn.iter().zip(grads.gcn.iter_mut()) {
            for (w, gw) in l.w.iter().zip(g.w.iter_mut()) {
                *gw += pen(*w, l1, l2);
            }
        }
        for (l, g) in self.temporal.iter().zip(grads.temporal.iter_mut()) {
            for (w, gw) in l.kernel.iter().zip(g.kernel.iter_mut()) {
                *gw += pen(*w, l1, l2);
            }
        }
        for (l, g) in self
            .decoder
            .layers
            .iter()
            .chain(self.main.layers.iter())
            .zip(
                grads
                    .decoder
                    .layers
                    .iter_mut()
                    .chain(grads.main.layers.iter_mut()),
            )
        {
            for (w, gw) in l.w.iter().zip(g.w.iter_mut()) {
                *gw += pen(*w, l1, l2);
            }
        }
    }
}

/// Symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` from the adjacency
/// pair produced by the feeder.
pub fn normalized_adjacency(a_tilde: &Array2<f64>, d_tilde: &Array2<f64>) -> Array2<f64> {
    let n = a_tilde.nrows();
    let mut s = a_tilde.clone();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / d_tilde[[i, i]].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    s
}

/// Single GCN layer: `ReLU(S xi W)` with `S` the normalized adjacency.
pub fn gcn_forward(
    layer: &GcnLayer,
    a_tilde: &Array2<f64>,
    d_tilde: &Array2<f64>,
    xi_t: &Array2<f64>,
) -> Result<Array2<f64>, NnError> {
    if xi_t.ncols() != layer.w.nrows() {
        return Err(NnError::Shape(format!(
            "gcn expects {} input features, got {}",
            layer.w.nrows(),
            xi_t.ncols()
        )));
    }
    if xi_t.nrows() != a_tilde.nrows() {
        return Err(NnError::Shape(format!(
            "gcn adjacency covers {} nodes, features cover {}",
            a_tilde.nrows(),
            xi_t.nrows()
        )));
    }
    let s = normalized_adjacency(a_tilde, d_tilde);
    let mut h = s.dot(xi_t).dot(&layer.w);
    h.mapv_inplace(|v| v.max(0.0));
    Ok(h)
}

/// Valid 1-D convolution stack over one node's sequence `(T, channels)`.
pub fn temporal_forward(
    layers: &[TemporalConvLayer],
    z0: &Array2<f64>,
) -> Result<Array2<f64>, NnError> {
    let needed: usize = layers.iter().map(|l| l.kernel.shape()[0] - 1).sum::<usize>() + 1;
    if z0.nrows() < needed {
        return Err(NnError::HorizonTooShort {
            horizon: z0.nrows(),
            needed,
        });
    }
    let mut z = z0.clone();
    for layer in layers {
        let (k, c_in, c_out) = (
            layer.kernel.shape()[0],
            layer.kernel.shape()[1],
            layer.kernel.shape()[2],
        );
        if z.ncols() != c_in {
            return Err(NnError::Shape(format!(
                "conv expects {c_in} channels, got {}",
                z.ncols()
            )));
        }
        let t_out = z.nrows() - k + 1;
        let mut out = Array2::<f64>::zeros((t_out, c_out));
        for t in 0..t_out {
            for o in 0..c_out {
                let mut acc = layer.bias[o];
                for tau in 0..k {
                    for i in 0..c_in {
                        acc += z[[t + tau, i]] * layer.kernel[[tau, i, o]];
                    }
                }
                out[[t, o]] = acc.max(0.0);
            }
        }
        z = out;
    }
    Ok(z)
}

/// Dropout masks for one training pass (inverted dropout; `keep = 1 - p`).
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    /// Per decoder hidden layer.
    pub decoder: Vec<Array1<f64>>,
    /// Per main hidden layer.
    pub main: Vec<Array1<f64>>,
}

impl DropoutMasks {
    /// All-ones masks (inference).
    pub fn none(weights: &SurrogateWeights) -> DropoutMasks {
        DropoutMasks {
            decoder: weights.decoder.layers[..weights.decoder.layers.len() - 1]
                .iter()
                .map(|l| Array1::ones(l.w.nrows()))
                .collect(),
            main: weights.main.layers[..weights.main.layers.len() - 1]
                .iter()
                .map(|l| Array1::ones(l.w.nrows()))
                .collect(),
        }
    }

    /// Bernoulli masks scaled by 1/keep.
    pub fn sample(
        weights: &SurrogateWeights,
        p: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> DropoutMasks {
        use rand::Rng;
        let keep = 1.0 - p;
        let gen = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            Array1::from_shape_fn(n, |_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        };
        DropoutMasks {
            decoder: weights.decoder.layers[..weights.decoder.layers.len() - 1]
                .iter()
                .map(|l| gen(l.w.nrows(), rng))
                .collect(),
            main: weights.main.layers[..weights.main.layers.len() - 1]
                .iter()
                .map(|l| gen(l.w.nrows(), rng))
                .collect(),
        }
    }
}

/// All intermediates of one forward pass, retained for backprop.
pub struct Tape {
    /// Input slices per period (N, F_in).
    pub xi: Vec<Array2<f64>>,
    /// Per GCN layer, per period: pre-activation (N, d).
    pub gcn_pre: Vec<Vec<Array2<f64>>>,
    /// Final GCN output per period (N, d_gcn), before normalization.
    pub gcn_out: Vec<Array2<f64>>,
    /// LayerNorm caches per (node, period): (mean, inv_sigma, normalized).
    pub ln_mean: Array2<f64>,
    pub ln_inv_sigma: Array2<f64>,
    pub ln_hat: Vec<Array2<f64>>,
    /// Per node: sequence entering the conv stack (T, d_gcn).
    pub z0: Vec<Array2<f64>>,
    /// Per conv layer, per node: pre-activation (T_l, d_l).
    pub conv_pre: Vec<Vec<Array2<f64>>>,
    /// Flattened encoder feature.
    pub flat: Array1<f64>,
    /// Decoder pre-activations and post-dropout activations.
    pub dec_pre: Vec<Array1<f64>>,
    pub dec_act: Vec<Array1<f64>>,
    pub zeta: Array1<f64>,
    /// Main input `[zeta; x]`, pre-activations, post-dropout activations.
    pub main_in: Array1<f64>,
    pub main_pre: Vec<Array1<f64>>,
    pub main_act: Vec<Array1<f64>>,
    pub psi: f64,
}

/// Full forward pass with tape. `s_norm` is the normalized adjacency,
/// `pooled` the (N, T, F_in) feature, `x_flat` the first-stage bits.
pub fn forward_tape(
    weights: &SurrogateWeights,
    s_norm: &Array2<f64>,
    pooled: &Array3<f64>,
    x_flat: &[f64],
    masks: &DropoutMasks,
) -> Result<Tape, NnError> {
    let (n, horizon, f_in) = (pooled.shape()[0], pooled.shape()[1], pooled.shape()[2]);
    if n != weights.num_buses || horizon != weights.horizon || f_in != weights.feature_dim {
        return Err(NnError::Shape(format!(
            "pooled ({n}, {horizon}, {f_in}) does not match weights ({}, {}, {})",
            weights.num_buses, weights.horizon, weights.feature_dim
        )));
    }
    if x_flat.len() != weights.x_dim {
        return Err(NnError::Shape(format!(
            "x has {} entries, weights expect {}",
            x_flat.len(),
            weights.x_dim
        )));
    }

    // GCN per period.
    let mut xi = Vec::with_capacity(horizon);
    for t in 0..horizon {
        xi.push(Array2::from_shape_fn((n, f_in), |(i, f)| pooled[[i, t, f]]));
    }
    let mut gcn_pre: Vec<Vec<Array2<f64>>> = vec![Vec::with_capacity(horizon); weights.gcn.len()];
    let mut gcn_out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut h = xi[t].clone();
        for (li, layer) in weights.gcn.iter().enumerate() {
            let pre = s_norm.dot(&h).dot(&layer.w);
            gcn_pre[li].push(pre.clone());
            h = pre.mapv(|v| v.max(0.0));
        }
        gcn_out.push(h);
    }
    let d_gcn = gcn_out[0].ncols();

    // LayerNorm over the feature axis, per (node, period).
    let mut ln_mean = Array2::<f64>::zeros((n, horizon));
    let mut ln_inv_sigma = Array2::<f64>::zeros((n, horizon));
    let mut ln_hat: Vec<Array2<f64>> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut hat = Array2::<f64>::zeros((n, d_gcn));
        for i in 0..n {
            let row = gcn_out[t].row(i);
            let mean = row.sum() / d_gcn as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d_gcn as f64;
            let inv_sigma = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            ln_mean[[i, t]] = mean;
            ln_inv_sigma[[i, t]] = inv_sigma;
            for f in 0..d_gcn {
                hat[[i, f]] = (row[f] - mean) * inv_sigma;
            }
        }
        ln_hat.push(hat);
    }

    // Per-node sequences with positional embedding.
    let mut z0: Vec<Array2<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut seq = Array2::<f64>::zeros((horizon, d_gcn));
        for t in 0..horizon {
            for f in 0..d_gcn {
                seq[[t, f]] = weights.layer_norm.gain[f] * ln_hat[t][[i, f]]
                    + weights.layer_norm.bias[f]
                    + weights.positional[[t, f]];
            }
        }
        z0.push(seq);
    }

    // Temporal convolutions per node.
    let mut conv_pre: Vec<Vec<Array2<f64>>> =
        vec![Vec::with_capacity(n); weights.temporal.len()];
    let mut conv_out: Vec<Array2<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = z0[i].clone();
        for (li, layer) in weights.temporal.iter().enumerate() {
            let (k, c_in, c_out) = (
                layer.kernel.shape()[0],
                layer.kernel.shape()[1],
                layer.kernel.shape()[2],
            );
            let t_out = z.nrows() - k + 1;
            let mut pre = Array2::<f64>::zeros((t_out, c_out));
            for t in 0..t_out {
                for o in 0..c_out {
                    let mut acc = layer.bias[o];
                    for tau in 0..k {
                        for c in 0..c_in {
                            acc += z[[t + tau, c]] * layer.kernel[[tau, c, o]];
                        }
                    }
                    pre[[t, o]] = acc;
                }
            }
            conv_pre[li].push(pre.clone());
            z = pre.mapv(|v| v.max(0.0));
        }
        conv_out.push(z);
    }

    // Flatten: nodes outer, then time, then channel.
    let t_l = conv_out[0].nrows();
    let c_l = conv_out[0].ncols();
    let mut flat = Array1::<f64>::zeros(n * t_l * c_l);
    for i in 0..n {
        for t in 0..t_l {
            for c in 0..c_l {
                flat[i * t_l * c_l + t * c_l + c] = conv_out[i][[t, c]];
            }
        }
    }

    // Decoder with dropout on hidden activations.
    let mut dec_pre = Vec::new();
    let mut dec_act = Vec::new();
    let mut h = flat.clone();
    let dec_last = weights.decoder.layers.len() - 1;
    for (li, layer) in weights.decoder.layers.iter().enumerate() {
        let pre = layer.w.dot(&h) + &layer.b;
        dec_pre.push(pre.clone());
        if li != dec_last {
            let act = pre.mapv(|v| v.max(0.0)) * &masks.decoder[li];
            dec_act.push(act.clone());
            h = act;
        } else {
            h = pre;
        }
    }
    let zeta = h;

    // Main evaluator on [zeta; x].
    let mut main_in = Array1::<f64>::zeros(zeta.len() + x_flat.len());
    for (i, v) in zeta.iter().enumerate() {
        main_in[i] = *v;
    }
    for (i, v) in x_flat.iter().enumerate() {
        main_in[zeta.len() + i] = *v;
    }
    let mut main_pre = Vec::new();
    let mut main_act = Vec::new();
    let main_last = weights.main.layers.len() - 1;
    let mut h = main_in.clone();
    for (li, layer) in weights.main.layers.iter().enumerate() {
        let pre = layer.w.dot(&h) + &layer.b;
        main_pre.push(pre.clone());
        if li != main_last {
            let act = pre.mapv(|v| v.max(0.0)) * &masks.main[li];
            main_act.push(act.clone());
            h = act;
        } else {
            h = pre;
        }
    }
    let psi = h[0];

    Ok(Tape {
        xi,
        gcn_pre,
        gcn_out,
        ln_mean,
        ln_inv_sigma,
        ln_hat,
        z0,
        conv_pre,
        flat,
        dec_pre,
        dec_act,
        zeta,
        main_in,
        main_pre,
        main_act,
        psi,
    })
}

/// Backward pass: gradient of `loss = f(psi)` given `d loss / d psi`.
/// Accumulates into `grads` (same shapes as the weights).
pub fn backward(
    weights: &SurrogateWeights,
    s_norm: &Array2<f64>,
    tape: &Tape,
    masks: &DropoutMasks,
    d_psi: f64,
    grads: &mut SurrogateWeights,
) {
    let n = weights.num_buses;
    let horizon = weights.horizon;

    // Main stack backward.
    let main_last = weights.main.layers.len() - 1;
    let mut d_out = Array1::from_elem(1, d_psi);
    for li in (0..weights.main.layers.len()).rev() {
        let layer = &weights.main.layers[li];
        let input = if li == 0 {
            &tape.main_in
        } else {
            &tape.main_act[li - 1]
        };
        let d_pre = if li == main_last {
            d_out.clone()
        } else {
            // Through dropout then ReLU.
            let mut d = d_out * &masks.main[li];
            for (v, pre) in d.iter_mut().zip(tape.main_pre[li].iter()) {
                if *pre <= 0.0 {
                    *v = 0.0;
                }
            }
            d
        };
        let g = &mut grads.main.layers[li];
        for r in 0..layer.w.nrows() {
            let dp = d_pre[r];
            g.b[r] += dp;
            for c in 0..layer.w.ncols() {
                g.w[[r, c]] += dp * input[c];
            }
        }
        d_out = layer.w.t().dot(&d_pre);
    }
    // Split the main-input gradient: embedding part continues upstream.
    let zeta_dim = tape.zeta.len();
    let mut d_zeta = Array1::<f64>::zeros(zeta_dim);
    for i in 0..zeta_dim {
        d_zeta[i] = d_out[i];
    }

    // Decoder backward.
    let dec_last = weights.decoder.layers.len() - 1;
    let mut d_out = d_zeta;
    for li in (0..weights.decoder.layers.len()).rev() {
        let layer = &weights.decoder.layers[li];
        let input = if li == 0 {
            &tape.flat
        } else {
            &tape.dec_act[li - 1]
        };
        let d_pre = if li == dec_last {
            d_out.clone()
        } else {
            let mut d = d_out * &masks.decoder[li];
            for (v, pre) in d.iter_mut().zip(tape.dec_pre[li].iter()) {
                if *pre <= 0.0 {
                    *v = 0.0;
                }
            }
            d
        };
        let g = &mut grads.decoder.layers[li];
        for r in 0..layer.w.nrows() {
            let dp = d_pre[r];
            g.b[r] += dp;
            for c in 0..layer.w.ncols() {
                g.w[[r, c]] += dp * input[c];
            }
        }
        d_out = layer.w.t().dot(&d_pre);
    }
    let d_flat = d_out;

    // Un-flatten into per-node conv-output gradients.
    let t_l = tape.conv_pre.last().map_or(horizon, |per_node| per_node[0].nrows());
    let c_l = tape.conv_pre.last().map_or(0, |per_node| per_node[0].ncols());
    let mut d_conv_out: Vec<Array2<f64>> = (0..n)
        .map(|i| {
            Array2::from_shape_fn((t_l, c_l), |(t, c)| d_flat[i * t_l * c_l + t * c_l + c])
        })
        .collect();

    // Temporal conv backward, per node, deepest layer first.
    for li in (0..weights.temporal.len()).rev() {
        let layer = &weights.temporal[li];
        let (k, c_in, c_out) = (
            layer.kernel.shape()[0],
            layer.kernel.shape()[1],
            layer.kernel.shape()[2],
        );
        let mut d_inputs: Vec<Array2<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let pre = &tape.conv_pre[li][i];
            let input: Array2<f64> = if li == 0 {
                tape.z0[i].clone()
            } else {
                tape.conv_pre[li - 1][i].mapv(|v| v.max(0.0))
            };
            let t_out = pre.nrows();
            let mut d_pre = d_conv_out[i].clone();
            for t in 0..t_out {
                for o in 0..c_out {
                    if pre[[t, o]] <= 0.0 {
                        d_pre[[t, o]] = 0.0;
                    }
                }
            }
            let gk = &mut grads.temporal[li];
            let mut d_in = Array2::<f64>::zeros((input.nrows(), c_in));
            for t in 0..t_out {
                for o in 0..c_out {
                    let dp = d_pre[[t, o]];
                    if dp == 0.0 {
                        continue;
                    }
                    gk.bias[o] += dp;
                    for tau in 0..k {
                        for c in 0..c_in {
                            gk.kernel[[tau, c, o]] += dp * input[[t + tau, c]];
                            d_in[[t + tau, c]] += dp * layer.kernel[[tau, c, o]];
                        }
                    }
                }
            }
            d_inputs.push(d_in);
        }
        d_conv_out = d_inputs;
    }
    let d_z0 = d_conv_out;

    // Positional and LayerNorm backward into per-period GCN-output grads.
    let d_gcn_dim = weights.layer_norm.gain.len();
    let mut d_gcn_out: Vec<Array2<f64>> =
        (0..horizon).map(|_| Array2::zeros((n, d_gcn_dim))).collect();
    for i in 0..n {
        for t in 0..horizon {
            let dz = d_z0[i].row(t);
            for f in 0..d_gcn_dim {
                grads.positional[[t, f]] += dz[f];
                grads.layer_norm.gain[f] += dz[f] * tape.ln_hat[t][[i, f]];
                grads.layer_norm.bias[f] += dz[f];
            }
            // LayerNorm input gradient.
            let inv_sigma = tape.ln_inv_sigma[[i, t]];
            let dxhat: Vec<f64> = (0..d_gcn_dim)
                .map(|f| dz[f] * weights.layer_norm.gain[f])
                .collect();
            let mean_dxhat = dxhat.iter().sum::<f64>() / d_gcn_dim as f64;
            let mean_dxhat_hat = dxhat
                .iter()
                .enumerate()
                .map(|(f, v)| v * tape.ln_hat[t][[i, f]])
                .sum::<f64>()
                / d_gcn_dim as f64;
            for f in 0..d_gcn_dim {
                d_gcn_out[t][[i, f]] = inv_sigma
                    * (dxhat[f] - mean_dxhat - tape.ln_hat[t][[i, f]] * mean_dxhat_hat);
            }
        }
    }

    // GCN backward per period, deepest layer first.
    for t in 0..horizon {
        let mut d_h = d_gcn_out[t].clone();
        for li in (0..weights.gcn.len()).rev() {
            let layer = &weights.gcn[li];
            let pre = &tape.gcn_pre[li][t];
            let mut d_pre = d_h.clone();
            for ((r, c), v) in d_pre.indexed_iter_mut() {
                if pre[[r, c]] <= 0.0 {
                    *v = 0.0;
                }
            }
            let input: Array2<f64> = if li == 0 {
                tape.xi[t].clone()
            } else {
                tape.gcn_pre[li - 1][t].mapv(|v| v.max(0.0))
            };
            // pre = S * input * W
            let s_input = s_norm.dot(&input);
            grads.gcn[li].w = &grads.gcn[li].w + &s_input.t().dot(&d_pre);
            d_h = s_norm.t().dot(&d_pre).dot(&layer.w.t());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn gcn_single_node_identity() {
        let layer = GcnLayer {
            w: Array2::eye(2),
        };
        let a = arr2(&[[1.0]]);
        let d = arr2(&[[1.0]]);
        let xi = arr2(&[[0.3, 0.7]]);
        let h = gcn_forward(&layer, &a, &d, &xi).unwrap();
        assert_eq!(h, xi);
    }

    #[test]
    fn gcn_two_nodes_average() {
        // Two connected nodes: S = 0.5 * ones, so features average.
        let layer = GcnLayer {
            w: Array2::eye(1),
        };
        let a = arr2(&[[1.0, 1.0], [1.0, 1.0]]);
        let d = arr2(&[[2.0, 0.0], [0.0, 2.0]]);
        let xi = arr2(&[[2.0], [4.0]]);
        let h = gcn_forward(&layer, &a, &d, &xi).unwrap();
        assert!((h[[0, 0]] - 3.0).abs() < 1e-12);
        assert!((h[[1, 0]] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gcn_matches_triple_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = 5;
            let f_in = 3;
            let d_out = 4;
            let mut a = Array2::<f64>::eye(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < 0.5 {
                        a[[i, j]] = 1.0;
                        a[[j, i]] = 1.0;
                    }
                }
            }
            let mut d = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                d[[i, i]] = a.row(i).sum();
            }
            let layer = GcnLayer {
                w: Array2::from_shape_fn((f_in, d_out), |_| rng.gen_range(-1.0..1.0)),
            };
            let xi = Array2::from_shape_fn((n, f_in), |_| rng.gen_range(-1.0..1.0));
            let h = gcn_forward(&layer, &a, &d, &xi).unwrap();
            // Naive triple loop.
            for i in 0..n {
                for o in 0..d_out {
                    let mut acc = 0.0;
                    for j in 0..n {
                        for f in 0..f_in {
                            let s_ij = a[[i, j]] / (d[[i, i]].sqrt() * d[[j, j]].sqrt());
                            acc += s_ij * xi[[j, f]] * layer.w[[f, o]];
                        }
                    }
                    assert!((h[[i, o]] - acc.max(0.0)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn conv_identity_kernel() {
        let layer = TemporalConvLayer {
            kernel: Array3::from_shape_fn((1, 1, 1), |_| 1.0),
            bias: Array1::zeros(1),
        };
        let z0 = arr2(&[[1.0], [2.0], [3.0]]);
        let z = temporal_forward(&[layer], &z0).unwrap();
        assert_eq!(z, z0);
    }

    #[test]
    fn conv_sum_kernel() {
        // Kernel (1, 1) over (1, 2, 3): pre-activations (3, 5).
        let layer = TemporalConvLayer {
            kernel: Array3::from_shape_fn((2, 1, 1), |_| 1.0),
            bias: Array1::zeros(1),
        };
        let z0 = arr2(&[[1.0], [2.0], [3.0]]);
        let z = temporal_forward(&[layer], &z0).unwrap();
        assert_eq!(z.nrows(), 2);
        assert!((z[[0, 0]] - 3.0).abs() < 1e-12);
        assert!((z[[1, 0]] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_sum_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let t = 7;
            let (k, c_in, c_out) = (3, 2, 4);
            let layer = TemporalConvLayer {
                kernel: Array3::from_shape_fn((k, c_in, c_out), |_| rng.gen_range(-1.0..1.0)),
                bias: Array1::from_shape_fn(c_out, |_| rng.gen_range(-0.5..0.5)),
            };
            let z0 = Array2::from_shape_fn((t, c_in), |_| rng.gen_range(-1.0..1.0));
            let z = temporal_forward(std::slice::from_ref(&layer), &z0).unwrap();
            for tt in 0..t - k + 1 {
                for o in 0..c_out {
                    let mut acc = layer.bias[o];
                    for tau in 0..k {
                        for c in 0..c_in {
                            acc += z0[[tt + tau, c]] * layer.kernel[[tau, c, o]];
                        }
                    }
                    assert!((z[[tt, o]] - acc.max(0.0)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn horizon_too_short_is_an_error() {
        let layer = TemporalConvLayer {
            kernel: Array3::zeros((4, 1, 1)),
            bias: Array1::zeros(1),
        };
        let z0 = arr2(&[[1.0], [2.0], [3.0]]);
        assert!(matches!(
            temporal_forward(&[layer], &z0),
            Err(NnError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn flat_roundtrip() {
        let w = SurrogateWeights::init(&ArchConfig::desk(), 6, 5, 10, 9, 42).unwrap();
        let flat = w.to_flat();
        assert_eq!(flat.len(), w.num_params());
        let mut w2 = w.zeros_like();
        w2.set_flat(&flat);
        assert_eq!(w, w2);
    }
}
