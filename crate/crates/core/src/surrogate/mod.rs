//! Scenario-encoding surrogate of the second-stage recourse cost: a GCN
//! plus temporal-convolution encoder feeding a compact ReLU evaluator,
//! trained with hand-derived backprop.

mod io;
mod nn;
mod train;

pub use io::{load_weights, save_weights, weights_from_json, weights_to_json};
pub use nn::{
    backward, forward_tape, gcn_forward, normalized_adjacency, temporal_forward, ArchConfig,
    DenseLayer, DropoutMasks, GcnLayer, LayerNorm, MlpStack, NnError, SurrogateWeights, Tape,
    TemporalConvLayer, TemporalSpec, LAYER_NORM_EPS,
};
pub use train::{
    activation_margin, encoder_forward, encoder_forward_pooled, grad_check, main_forward,
    predict_cost, train, GradCheckReport, Optimizer, TrainConfig, TrainSample,
};
