//! Two-stage stochastic Volt-VAR optimization (2S-VVO) for three-phase
//! unbalanced distribution feeders with network reconfiguration, plus a
//! neural surrogate of the second-stage recourse cost that embeds exactly
//! into the first-stage MILP.
//!
//! The crate is organized along the problem pipeline:
//!
//! - [`feeder`]: feeder data model, JSON ingestion, validation, per-branch
//!   LinDistFlow sensitivity matrices, graph adjacency.
//! - [`scenario`]: uncertainty scenarios, sampling, min/mean/max pooling,
//!   CSV persistence.
//! - [`milp`]: solver-agnostic MILP container, octagon linearization, free
//!   MPS export, solver backends (in-process HiGHS and external process).
//! - [`vvo`]: builds the deterministic, recourse, and extensive-form VVO
//!   MILPs; evaluates and verifies solutions.
//! - [`surrogate`]: scenario encoder (GCN + temporal convolutions + decoder
//!   MLP) and main evaluator MLP, with hand-rolled backprop and training.
//! - [`embed`]: interval bound propagation and exact ReLU-to-MILP encoding
//!   of the main evaluator; assembles the neural VVO model.
//! - [`datagen`]: labeled training-sample generation, including the
//!   kernel-plus-perturbation accelerated strategy.
//!
//! Data-parallel inner loops (scenario sampling, per-scenario recourse
//! solves, batch gradients) go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to sequential iteration
//! otherwise.

pub mod datagen;
pub mod embed;
pub mod exec;
pub mod feeder;
pub mod milp;
pub mod scenario;
pub mod surrogate;
pub mod vvo;
