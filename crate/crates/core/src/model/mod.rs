//! Network variants, graph assembly and checkpoints.

mod checkpoint;
mod config;
mod graph;

pub use checkpoint::Checkpoint;
pub use config::{
    BranchKind, ChannelPlan, ModelConfig, PrimaryInput, SecondaryInput, Variant, DEFAULT_BOTTLENECK_WIDTH,
    DEFAULT_GROWTH_RATE, DEFAULT_NUM_CLASSES, DEFAULT_SHALLOW_MODULES,
};
pub use graph::{build_model, GraphNode, InputSlot, ModelGraph, ModelInputs, NodeId, NodeOp, ParameterCount};
