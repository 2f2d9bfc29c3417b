//! A small VGG-style CNN: 3x3 convolutions (im2col + GEMM), optional
//! batch-norm, ReLU, 2x2 max-pooling, dropout and a dense head, trained
//! with Adam on softmax cross-entropy.

mod arch;
mod checkpoint;
mod layers;
mod network;
mod scalar;
mod train;

pub use arch::{ArchConfig, Stage, PRESETS, PRESET_WIDTHS};
pub use checkpoint::{layout_hash, load_model, save_model, CHECKPOINT_VERSION};
pub use layers::{Layer, Shape};
pub use network::{softmax, softmax_cross_entropy, Network, ParamEntry, Workspace};
pub use scalar::{gemm, Scalar};
pub use train::{evaluate, train, train_with_validation, EpochStats, History, Model, TrainConfig, DIVERGENCE_LOSS};
