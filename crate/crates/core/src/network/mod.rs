//! Spiking networks assembled from layer descriptors.

mod model;
mod spec;

pub use model::{
    argmax_rows, build_network, ForwardOptions, ForwardTrace, LossOutput, Network, SpikeRecord, TapeForward,
};
pub use spec::{
    BlockOptions, InputSpec, LayerSpec, MergePoint, NetworkSpec, PointNetOptions, PolicySpec, SpikingMlpOptions,
};
