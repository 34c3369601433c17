//! Parameters, primitive layers and the composite network blocks.

pub mod blocks;
mod forward;
pub mod layers;
mod params;

pub use blocks::{
    Block, BlockKind, BlockSpec, DecoderStage, DenseBlock, DenseModule, DownsamplerBlock, FusionAdapter,
    NonBottleneck1d, TransitionLayer,
};
pub use forward::{BnUpdate, Forward, InputGrads, Mode, ParamGrads, TraceEntry};
pub use layers::{BatchNorm2d, Conv2d, ConvBnRelu, ConvTranspose2d, Shape4, BN_EPSILON, BN_MOMENTUM};
pub use params::{EntryKind, Group, Init, ParamId, ParamRegistry, ParamSpec, ParamStore};
