//! Exactness audit of the ReLU encoding: pin the network inputs inside
//! their box, solve the MILP, and compare the encoded output against the
//! plain forward pass.

use super::bounds::propagate_bounds;
use super::encode::{encode_relu, EncodeError, NetInput};
use crate::milp::{MilpModel, SolveError, SolveLimits, SolverBackend};
use crate::surrogate::MlpStack;
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyEncodingError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("trial {trial} did not return a solution")]
    NoSolution { trial: usize },
}

/// Result of an encoding audit.
#[derive(Debug, Clone)]
pub struct EncodingReport {
    pub trials: usize,
    pub max_abs_error: f64,
}

/// Run `trials` random fixed-input solves plus every box vertex for small
/// input counts, comparing the MILP output to the forward pass.
pub fn verify_encoding(
    main: &MlpStack,
    input_box: &[(f64, f64)],
    trials: usize,
    backend: &dyn SolverBackend,
    seed: u64,
) -> Result<EncodingReport, VerifyEncodingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = propagate_bounds(main, input_box);
    let mut max_err: f64 = 0.0;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for _ in 0..trials {
        points.push(
            input_box
                .iter()
                .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                .collect(),
        );
    }
    // Box vertices for small dimensions (exhaustive corner check).
    if input_box.len() <= 10 {
        for mask in 0..(1usize << input_box.len()) {
            points.push(
                input_box
                    .iter()
                    .enumerate()
                    .map(|(i, &(lo, hi))| if mask & (1 << i) != 0 { hi } else { lo })
                    .collect(),
            );
        }
    }

    let n_trials = points.len();
    for (trial, point) in points.into_iter().enumerate() {
        let mut model = MilpModel::new("relu-encoding-audit");
        let mut inputs = Vec::with_capacity(point.len());
        for (i, v) in point.iter().enumerate() {
            let var = model
                .add_continuous(&format!("in{i}"), *v, *v)
                .map_err(EncodeError::from)?;
            inputs.push(NetInput::Var(var));
        }
        let embedded = encode_relu(&mut model, main, &inputs, &bounds, "nn")?;
        let result = backend.solve(&model, &SolveLimits::default())?;
        let values = result
            .assignment
            .as_ref()
            .ok_or(VerifyEncodingError::NoSolution { trial })?;
        let milp_psi = values[embedded.output.0];
        let forward = main.forward(&Array1::from_vec(point))[0];
        max_err = max_err.max((milp_psi - forward).abs());
    }

    Ok(EncodingReport {
        trials: n_trials,
        max_abs_error: max_err,
    })
}
