//! Path-method attribution engine: integrated gradients and general path
//! attributions for feed-forward networks, internal-neuron decompositions,
//! an executable axiom suite, and desk-scale pruning experiments.

pub mod attribution;
pub mod axioms;
pub mod error;
pub mod io;
pub mod neuron;
pub mod nn;
pub mod paths;
pub mod pruning;
pub mod tensor;

pub use attribution::{
    completeness_gap, distributional_ig, ensemble_attribute, integrated_gradients, path_attribute,
    AttributionMap, Baseline, BaselineDistribution,
};
pub use error::{Error, Result};
pub use neuron::{
    conductance, conductance_exact, flow_ij, patch_attr_exact, patch_attr_fast, rank_neurons,
    NeuronAttribution, NeuronKind, NeuronMethod, PatchSpec, RankOrder,
};
pub use nn::{DomainBox, Layer, LayerKind, Model, Network, SplitNetwork};
pub use paths::{EnsembleSpec, PathSpec};
pub use tensor::Tensor;
