//! Exact ReLU-to-MILP encoding with neuron-specific big-M constants.
//!
//! Each unstable hidden neuron splits its pre-activation into nonnegative
//! components tied to an activation indicator:
//!
//! ```text
//! sum_j w_ij h_j + b_i = h+ - h-,   0 <= h+ <= mu * hi,
//! 0 <= h- <= (1 - mu) * (-lo),      mu binary
//! ```
//!
//! Neurons whose interval sits entirely on one side of zero skip the
//! binary: stable-active neurons keep a linear identity, stable-inactive
//! neurons collapse to the constant zero. At any integral point the
//! encoded output equals the network's forward pass exactly, because the
//! interval bounds dominate every reachable pre-activation.

use super::bounds::NeuronBounds;
use crate::milp::{MilpModel, ModelError, Sense, VarId, VarKind};
use crate::surrogate::MlpStack;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("input spec count {got} does not match network inputs {want}")]
    InputCount { got: usize, want: usize },
    #[error("bounds cover {got} layers, network has {want}")]
    LayerCount { got: usize, want: usize },
}

/// An input of the embedded network: either a model variable (bounded by
/// its box) or a constant folded into the first layer's bias.
#[derive(Debug, Clone, Copy)]
pub enum NetInput {
    Var(VarId),
    Const(f64),
}

/// Post-activation of a hidden neuron, as seen by the next layer.
#[derive(Debug, Clone, Copy)]
pub enum NeuronVar {
    /// Constant post-activation (stable-inactive or degenerate neuron).
    Fixed(f64),
    /// Stable-active neuron: variable equals the pre-activation.
    Identity(VarId),
    /// Unstable neuron: positive part, negative part, indicator.
    Split {
        pos: VarId,
        neg: VarId,
        indicator: VarId,
    },
}

impl NeuronVar {
    /// The term the next layer sees (post-activation).
    fn as_term(&self) -> Option<(VarId, f64)> {
        match self {
            NeuronVar::Fixed(_) => None,
            NeuronVar::Identity(v) => Some((*v, 1.0)),
            NeuronVar::Split { pos, .. } => Some((*pos, 1.0)),
        }
    }

    fn constant(&self) -> f64 {
        match self {
            NeuronVar::Fixed(c) => *c,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddedNet {
    pub inputs: Vec<NetInput>,
    /// Hidden-layer neuron variables, layer by layer.
    pub neurons: Vec<Vec<NeuronVar>>,
    /// The scalar network output.
    pub output: VarId,
    /// Number of activation binaries emitted.
    pub num_binaries: usize,
}

/// Encode the stack into `model`. `bounds` must come from a box containing
/// the input values that will ever be imposed on `inputs`.
pub fn encode_relu(
    model: &mut MilpModel,
    main: &MlpStack,
    inputs: &[NetInput],
    bounds: &NeuronBounds,
    prefix: &str,
) -> Result<EmbeddedNet, EncodeError> {
    if inputs.len() != main.input_dim() {
        return Err(EncodeError::InputCount {
            got: inputs.len(),
            want: main.input_dim(),
        });
    }
    if bounds.pre.len() != main.layers.len() {
        return Err(EncodeError::LayerCount {
            got: bounds.pre.len(),
            want: main.layers.len(),
        });
    }

    // Previous layer as (terms, constants): inputs first.
    let mut prev_terms: Vec<Option<(VarId, f64)>> = inputs
        .iter()
        .map(|i| match i {
            NetInput::Var(v) => Some((*v, 1.0)),
            NetInput::Const(_) => None,
        })
        .collect();
    let mut prev_consts: Vec<f64> = inputs
        .iter()
        .map(|i| match i {
            NetInput::Var(_) => 0.0,
            NetInput::Const(c) => *c,
        })
        .collect();

    let mut neurons: Vec<Vec<NeuronVar>> = Vec::with_capacity(main.layers.len() - 1);
    let mut num_binaries = 0usize;
    let last = main.layers.len() - 1;
    let mut output = None;

    for (li, layer) in main.layers.iter().enumerate() {
        let mut this_layer = Vec::with_capacity(layer.w.nrows());
        for r in 0..layer.w.nrows() {
            let (lo, hi) = bounds.pre[li][r];
            // Affine pre-activation as terms plus constant.
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            let mut constant = layer.b[r];
            for c in 0..layer.w.ncols() {
                let w = layer.w[[r, c]];
                if w == 0.0 {
                    continue;
                }
                if let Some((v, scale)) = prev_terms[c] {
                    terms.push((v, w * scale));
                }
                constant += w * prev_consts[c];
            }

            if li == last {
                // Linear output row: psi - pre = 0.
                let psi = model.add_continuous(&format!("{prefix}.psi"), lo, hi)?;
                let mut row = vec![(psi, 1.0)];
                for (v, w) in &terms {
                    row.push((*v, -*w));
                }
                model.add_constraint(&format!("{prefix}.out"), row, Sense::Eq, constant)?;
                output = Some(psi);
                continue;
            }

            let nv = if lo == hi {
                // Degenerate interval: the pre-activation is a constant.
                NeuronVar::Fixed(lo.max(0.0))
            } else if hi <= 0.0 {
                NeuronVar::Fixed(0.0)
            } else if lo >= 0.0 {
                let h = model.add_continuous(&format!("{prefix}.h{li}.{r}"), lo, hi)?;
                let mut row = vec![(h, 1.0)];
                for (v, w) in &terms {
                    row.push((*v, -*w));
                }
                model.add_constraint(&format!("{prefix}.eq{li}.{r}"), row, Sense::Eq, constant)?;
                NeuronVar::Identity(h)
            } else {
                let pos = model.add_continuous(&format!("{prefix}.hp{li}.{r}"), 0.0, hi)?;
                let neg = model.add_continuous(&format!("{prefix}.hn{li}.{r}"), 0.0, -lo)?;
                let mu = model.add_var(
                    &format!("{prefix}.mu{li}.{r}"),
                    VarKind::Binary,
                    0.0,
                    1.0,
                )?;
                num_binaries += 1;
                // pre = pos - neg
                let mut row = vec![(pos, 1.0), (neg, -1.0)];
                for (v, w) in &terms {
                    row.push((*v, -*w));
                }
                model.add_constraint(&format!("{prefix}.eq{li}.{r}"), row, Sense::Eq, constant)?;
                // pos <= hi * mu
                model.add_constraint(
                    &format!("{prefix}.pos{li}.{r}"),
                    vec![(pos, 1.0), (mu, -hi)],
                    Sense::Le,
                    0.0,
                )?;
                // neg <= -lo * (1 - mu)
                model.add_constraint(
                    &format!("{prefix}.neg{li}.{r}"),
                    vec![(neg, 1.0), (mu, -lo)],
                    Sense::Le,
                    -lo,
                )?;
                NeuronVar::Split {
                    pos,
                    neg,
                    indicator: mu,
                }
            };
            this_layer.push(nv);
        }
        if li != last {
            prev_terms = this_layer.iter().map(|nv| nv.as_term()).collect();
            prev_consts = this_layer.iter().map(|nv| nv.constant()).collect();
            neurons.push(this_layer);
        }
    }

    Ok(EmbeddedNet {
        inputs: inputs.to_vec(),
        neurons,
        output: output.expect("output layer emitted"),
        num_binaries,
    })
}
