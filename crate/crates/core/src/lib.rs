//! Auditing sample representation in image datasets.
//!
//! A dataset is compared against a declared *expectation* over a small,
//! human-readable annotation space (shape class, square bounding box,
//! stroke brightness). When the dataset carries no annotations, expected
//! annotations are rendered into test images, a classifier trained on the
//! dataset scores them by temperature-scaled maximum softmax confidence,
//! and exact Shapley values attribute each score back to individual
//! annotation fields. Fields with non-negative attribution form an estimate
//! of what the dataset actually covers, which is compared to the dataset's
//! label supports with a signed overlap index.
//!
//! Modules, bottom-up:
//!
//! * [`annot`]: annotations, expectation specs, binned supports, overlap index
//! * [`render`]: the parametric simulator and the auto-labeler
//! * [`dataset`]: biased "collected" sets, simulated test sets, on-disk container
//! * [`nn`]: a small VGG-style CNN engine with Adam, batch-norm and dropout
//! * [`detector`]: max-softmax scoring, temperature search, outlier partition, AUROC
//! * [`attribution`]: exact 5-feature Shapley values and marginal representation
//!
//! All randomness flows from 64-bit seeds through ChaCha8 (see [`rng`]), so
//! every artifact is reproducible across platforms.

pub mod annot;
pub mod attribution;
pub mod dataset;
pub mod detector;
mod error;
pub mod nn;
pub mod render;
pub mod rng;

pub use annot::{
    estimate_support, overlap_index, per_label_overlap, sample_expected, Annotation,
    BinnedSupport, ExpectationSpec, IntRange, LabelDistribution, OverlapReport, LABELS,
};
pub use attribution::{
    attribute_testset, audit_overlap, marginal_representation, shapley_exact, AttributionRecord,
    MaskingPolicy, Representation,
};
pub use dataset::{gen_collected, gen_test, BiasSpec, Dataset, DatasetMeta};
pub use detector::{
    auroc, calibrate_temperature, partition_outliers, score, CalibrationResult, OutlierPartition,
    ScoreRecord,
};
pub use error::{Error, Result};
pub use nn::{ArchConfig, Model, TrainConfig};
pub use render::{auto_label, render, GrayImage, RenderKind, RenderStyle, Simulator};
