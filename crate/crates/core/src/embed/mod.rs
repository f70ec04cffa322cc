//! Interval bound propagation over the main evaluator and its exact
//! MILP embedding; assembly of the scenario-independent neural VVO model.

mod bounds;
mod encode;
mod neural_vvo;
mod verify;

pub use bounds::{propagate_bounds, NeuronBounds};
pub use encode::{encode_relu, EmbeddedNet, EncodeError, NetInput, NeuronVar};
pub use neural_vvo::{build_neural_vvo, NeuralBuildError, NeuralModel};
pub use verify::{verify_encoding, EncodingReport, VerifyEncodingError};
