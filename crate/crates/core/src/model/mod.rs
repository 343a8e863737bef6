//! Architecture configuration, graph construction, cost accounting,
//! embeddability validation, execution and weight I/O.

mod build;
mod config;
mod encoder;
mod exec;
mod flops;
mod graph;
mod validate;
mod weights;

pub use build::{build_model, HEATMAP_LAYER};
pub use config::{Activation, BlockKind, ModelConfig, SkipMode, StageSpec, LEAKY_SLOPE};
pub use encoder::{preset, round_filters, round_repeats, EncoderSpec, Family, ENCODER_NAMES};
pub use exec::{infer, infer_timed, runtime_shapes, InferOptions, Op, Plan};
pub use flops::{count_macs, count_params, graph_cost, Convention, FlopsReport, LayerCost};
pub use graph::{ConvGeometry, Graph, GraphBuilder, LayerKind, Node, NodeId, BN_EPS, BN_PARAMS};
pub use validate::{
    first_error, graph_warnings, validate_config, validate_config_with, Diagnostic, Level,
    ValidateOptions, CHANNEL_MULTIPLE, MAX_CHANNELS_3X3, MAX_CHANNELS_5X5, MAX_DECONV_LEVELS,
};
pub use weights::{Manifest, ManifestEntry, ParamArray, WeightStore};
