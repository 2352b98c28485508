//! Spiking neural networks with activation-wise membrane potential
//! propagation (AMP2) alongside conventional timestep-wise LIF updates.
//!
//! The crate bundles a small reverse-mode tensor engine, the neuron models,
//! residual shortcut variants, trainable point/MLP networks, closed-form and
//! Monte Carlo statistics of the membrane potential, an energy model and
//! synthetic datasets.

pub mod data;
pub mod energy;
pub mod error;
pub mod gradcheck;
pub mod network;
pub mod neuron;
pub mod optim;
pub mod rng;
pub mod shortcut;
pub mod stats;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use gradcheck::check_gradients;
pub use neuron::{MembraneState, NeuronConfig, NeuronPolicy, SpikeForward, Surrogate, ThresholdMode};
pub use rng::RandomSource;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
