//! The scale-wise recursive generator.
//!
//! A learnable feature grid is sampled at frame `t`, lifted to `C` channels,
//! then upsampled `M` times by 2; after every upsample `L` blocks refine the
//! features. Each block is a residual spatial-mixing branch (depthwise conv)
//! followed by a residual channel-mixing branch (FFN). [`ShareMode`] decides
//! which of those parameter sets are reused across stages.

mod budget;
mod config;
mod generate;
mod store;

pub use budget::{
    channel_set_size, count_params, match_budget, spatial_set_size, ParamCounts, MAX_CHANNELS,
};
pub use config::{ConfigError, ModelConfig, ShareMode};
pub use generate::{
    base_grid, bind, channel_mixing, forward_frame, generate, grid_position, render_video,
    spatial_mixing, srnerv_block, Binding, BoundParams, ChannelVars, SpatialVars, NORM_EPS,
};
pub use store::{
    channel_index, channel_sets, layout, spatial_index, spatial_sets, tensor_specs, ChannelSet,
    Layout, Param, ParamKind, ParameterStore, Partition, SpatialSet, GRID_INIT_STD,
    WEIGHT_INIT_STD,
};

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("frame index {t} out of range for {frames} frames")]
    FrameOutOfRange { t: usize, frames: usize },
    #[error("no channel width reaches {target} parameters within 20% (nearest {nearest})")]
    Budget { target: usize, nearest: usize },
    #[error("tensor layout mismatch: {0}")]
    Layout(String),
}
