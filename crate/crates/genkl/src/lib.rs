//! Generalized KL divergence for resolving label ambiguity and label
//! non-conformity in weakly labeled datasets.
//!
//! A prediction vector that spreads its mass over several classes, or
//! concentrates it away from the given label, often signals an instance
//! whose content does not conform to any single class ("NC": ambiguous or
//! out-of-distribution). This crate implements:
//!
//! - the (α, β)-generalized KL divergence and a zoo of reference
//!   divergences ([`divergence`]);
//! - NC identification by thresholding that divergence against a set of
//!   uniform-like reference vectors, plus threshold/entropy baselines
//!   ([`identify`]);
//! - double-hot soft relabeling of the non-NC instances ([`relabel`]);
//! - the combined training loss over clean / non-NC / NC batches, with
//!   analytic gradients for a linear-softmax model ([`loss`]);
//! - identification quality metrics ([`metrics`]);
//! - a deterministic desk-scale training loop on synthetic data with
//!   planted noise and NC instances ([`sim`]).
//!
//! All distributions are validated [`types::StochasticVector`]s; class
//! indices are 0-based throughout the API.

pub mod divergence;
pub mod identify;
pub mod loss;
pub mod metrics;
pub mod relabel;
pub mod sim;
pub mod types;

pub use divergence::{
    collision_entropy, cross_entropy, dc_kl, delta_divergence, dominant_mask, gen_kl, jeffreys,
    js, kl, mse, normalized_entropy, renyi_entropy, shannon_entropy, DivergenceError, GenKlParams,
    LogBase,
};
pub use identify::{
    is_nc_dsos_gate, is_nc_genkl, is_nc_josrc, is_nc_threshold, partition, sample_uniform_like,
    IdentifierConfig, IdentifyError, NcDecision, PartitionReport, RecordDecision, ThresholdMethod,
    UniformLikeSet, DEFAULT_IDENTIFY_ALPHA, DEFAULT_IDENTIFY_BETA, DEFAULT_IDENTIFY_P_COUNT,
    DEFAULT_IDENTIFY_SIGMA,
};
pub use loss::{
    loss_all, loss_all_forward, loss_all_gradient, loss_clean, loss_nc, loss_non_nc, Gradient,
    LinearSoftmaxModel, LossError, LossWeights, TrainingBatches, LOG_FLOOR,
};
pub use metrics::{
    classification_accuracy, confusion, f1, kappa, precision_recall_specificity, ConfusionCounts,
    MetricValue, MetricsError,
};
pub use relabel::{
    assign_soft_labels, make_double_hot, normalize_double_hot, normalized_class_ratios,
    ClassRatioVector, RelabelError, SoftLabel,
};
pub use sim::{
    baseline_cross_entropy, derive_seed, detectable_alpha_bound, generate_synthetic, predict_all,
    pretrain, run_genkl, sensitivity_sweep, FlagBreakdown, FlagCount, InstanceFlag,
    IterationReport, OptimizerParams, PretrainSplit, RunParams, SimError, SweepGrid, SweepRow,
    SyntheticConfig, SyntheticDataset, DEFAULT_SIM_ALPHA, DEFAULT_TRAIN_ALPHA, DEFAULT_TRAIN_BETA,
    DEFAULT_TRAIN_OMEGA, DEFAULT_TRAIN_P_COUNT, DEFAULT_TRAIN_SIGMA,
};
pub use types::{
    DatasetManifest, DatasetRole, DominanceMask, DoubleHotLabel, ManifestError, OneHotVector,
    PredictionRecord, StochasticVector, VectorError,
};
