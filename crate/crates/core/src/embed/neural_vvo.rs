//! Assembly of the neural VVO model: first-stage constraints plus the
//! embedded main evaluator, with the scenario embedding folded in as
//! constants. Model size is independent of the scenario count.

use super::bounds::{propagate_bounds, NeuronBounds};
use super::encode::{encode_relu, EmbeddedNet, EncodeError, NetInput};
use crate::feeder::Feeder;
use crate::milp::{MilpModel, VarId};
use crate::scenario::ScenarioSet;
use crate::surrogate::{encoder_forward, NnError, SurrogateWeights};
use crate::vvo::{build_first_stage, BuildError, FirstStageLayout, FirstStageVars};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralBuildError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("weights trained for {want} first-stage bits, feeder layout has {got}")]
    LayoutMismatch { got: usize, want: usize },
}

/// Everything a caller needs to interpret a neural-model solve.
pub struct NeuralModel {
    pub model: MilpModel,
    pub layout: FirstStageLayout,
    pub first_stage: FirstStageVars,
    pub embedded: EmbeddedNet,
    pub bounds: NeuronBounds,
    /// The scenario embedding folded into the model.
    pub zeta: Vec<f64>,
    /// Embedding components that escaped the stored training envelope
    /// (the box was widened around them before encoding).
    pub widened_dims: Vec<usize>,
    pub psi: VarId,
    pub j_min: f64,
    pub j_max: f64,
}

impl NeuralModel {
    /// Rescaled surrogate cost at a solved assignment.
    pub fn predicted_cost(&self, values: &[f64]) -> f64 {
        values[self.psi.0] * (self.j_max - self.j_min) + self.j_min
    }
}

/// The embedding box: stored training envelope plus a 10% span margin,
/// widened further if the current embedding escapes it.
fn zeta_box(weights: &SurrogateWeights, zeta: &[f64]) -> (Vec<(f64, f64)>, Vec<usize>) {
    let mut widened = Vec::new();
    let mut out = Vec::with_capacity(zeta.len());
    for i in 0..zeta.len() {
        let (zmin, zmax) = (weights.zeta_min[i], weights.zeta_max[i]);
        let span = (zmax - zmin).max(1e-6);
        let mut lo = zmin - 0.1 * span;
        let mut hi = zmax + 0.1 * span;
        if zeta[i] < lo || zeta[i] > hi {
            widened.push(i);
            let extra = 0.1 * span + (zeta[i] - zmax).max(zmin - zeta[i]).max(0.0);
            lo = lo.min(zeta[i] - extra);
            hi = hi.max(zeta[i] + extra);
        }
        out.push((lo, hi));
    }
    (out, widened)
}

/// Build the neural VVO MILP: exact first-stage feasible set, embedded
/// surrogate objective `c'z + psi (j_max - j_min) + j_min`.
pub fn build_neural_vvo(
    feeder: &Feeder,
    set: &ScenarioSet,
    weights: &SurrogateWeights,
) -> Result<NeuralModel, NeuralBuildError> {
    let horizon = weights.horizon;
    let layout = FirstStageLayout::new(feeder, horizon);
    if layout.len() != weights.x_dim {
        return Err(NeuralBuildError::LayoutMismatch {
            got: layout.len(),
            want: weights.x_dim,
        });
    }

    let zeta = encoder_forward(weights, feeder, set)?;
    let zeta: Vec<f64> = zeta.to_vec();
    let (zbox, widened_dims) = zeta_box(weights, &zeta);

    let (mut model, first_stage) = build_first_stage(feeder, horizon)?;
    model.name = format!("{}-neural-vvo", feeder.name);

    // Inputs: embeddings as folded constants, first-stage bits as the
    // model's own binaries, in layout order.
    let mut inputs: Vec<NetInput> = zeta.iter().map(|&z| NetInput::Const(z)).collect();
    let mut input_box: Vec<(f64, f64)> = zbox;
    let names = layout.var_names(feeder);
    for name in &names {
        let id = model.lookup(name).expect("layout variable exists");
        inputs.push(NetInput::Var(id));
        let v = model.var(id);
        input_box.push((v.lo, v.hi));
    }

    let bounds = propagate_bounds(&weights.main, &input_box);
    let embedded = encode_relu(&mut model, &weights.main, &inputs, &bounds, "nn")?;

    // Objective: J(psi) = psi (j_max - j_min) + j_min on top of the
    // first-stage switching/tap costs already in the model.
    model.add_objective_term(embedded.output, weights.j_max - weights.j_min);
    model.add_objective_constant(weights.j_min);

    Ok(NeuralModel {
        psi: embedded.output,
        model,
        layout,
        first_stage,
        embedded,
        bounds,
        zeta,
        widened_dims,
        j_min: weights.j_min,
        j_max: weights.j_max,
    })
}
