//! A small CPU deep-learning engine for the Dual-Feedback CNN: NHWC tensors,
//! a reverse-mode tape, Pro_Conv and DF blocks, Adam training over imbalanced
//! folds, and the Acc/Sen/Spe/F1/APT metric suite.

pub mod autodiff;
pub mod blocks;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod params;
pub mod tensor;
pub mod training;

pub use autodiff::{Gradients, Tape, Var};
pub use blocks::{df_block, df_block_ablated, pro_conv, DfBlock, DfParams, Pathways, ProConv, ProConvParams};
pub use data::{load_dataset, resize_normalize, synth_generate, Dataset, DatasetStats, ImageSource, Label, SyntheticSet};
pub use error::{Error, Result};
pub use evaluation::{apt, confusion, emit_report, metrics, ConfusionMatrix, MetricsReport, TraceRow};
pub use model::{build_network, count_params, predict, Network, NetworkConfig, DEFAULT_FILTERS};
pub use ops::{conv2d, maxpool2d, ConvSpec};
pub use tensor::{Real, Shape, Tensor};
pub use training::{
    adam_step, load_checkpoint, make_folds, save_checkpoint, train, AdamConfig, Checkpoint, FoldSpec, TrainConfig,
};
