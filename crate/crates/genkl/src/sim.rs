//! Desk-scale embodiment of the iterative training loop: synthetic data
//! with planted NC instances and label noise, a linear-softmax learner,
//! the two-stage iteration, and sensitivity sweeps.
//!
//! Everything here is deterministic given the configured seeds. Independent
//! random streams are derived with [`derive_seed`], so adding a consumer
//! never perturbs existing ones.

use crate::divergence::LogBase;
use crate::identify::{partition, IdentifierConfig, IdentifyError};
use crate::loss::{
    loss_all_forward, loss_all_gradient, Gradient, LinearSoftmaxModel, LossError, LossWeights,
    TrainingBatches,
};
use crate::metrics::{classification_accuracy, confusion, ConfusionCounts, MetricsError};
use crate::relabel::{
    assign_soft_labels, normalized_class_ratios, RelabelError, SoftLabel,
};
use crate::types::{
    DatasetManifest, DatasetRole, DoubleHotLabel, ManifestError, OneHotVector, PredictionRecord,
    StochasticVector,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Published `alpha` for large-scale training runs (kept distinct from the
/// identification-benchmark default, which is 1.0247).
pub const DEFAULT_TRAIN_ALPHA: f64 = 1.05;
/// Published `beta` for large-scale training runs.
pub const DEFAULT_TRAIN_BETA: f64 = 0.03;
/// Published sampling spread for large-scale training runs.
pub const DEFAULT_TRAIN_SIGMA: f64 = 0.05;
/// Published uniform-like set size for large-scale training runs.
pub const DEFAULT_TRAIN_P_COUNT: usize = 20;
/// Published loss-term weights for large-scale training runs.
pub const DEFAULT_TRAIN_OMEGA: (f64, f64, f64) = (1.0, 32.0, 1.0);

/// Default `alpha` for the bundled synthetic generator. Structured NC
/// instances spread over `m` of `k` classes are only detectable against the
/// uniform reference when `alpha <= (m/k) * log(m) / log(k)` (about 0.35
/// for the default m = 5, k = 10), so the synthetic default sits below that
/// bound with margin; see also [`detectable_alpha_bound`].
pub const DEFAULT_SIM_ALPHA: f64 = 0.3;

/// Standard deviation of the Gaussian weight initialization.
const INIT_SCALE: f64 = 0.01;
/// Noise scale of ambiguous-NC instances relative to the ID noise. Unit
/// noise would displace a midpoint by more than its distance to the
/// nearest centroids (breaking the defining equidistance, so that a single
/// label would fit after all); a tighter cloud keeps the planted ground
/// truth honest.
const AMBIGUOUS_NOISE_SCALE: f64 = 0.3;
/// Fraction of ID instances that are hard: equidistant from a few (fewer
/// than half of the ambiguity subset's worth of) centroids, labeled with
/// one of the straddled classes. Such instances keep a defensible single
/// label, so they are conforming ground truth, but a trained model spreads
/// its prediction over the straddled classes plus noise-driven tails,
/// giving them higher entropy than genuinely ambiguous instances get.
/// Without them, prediction entropy alone would separate the planted NC
/// instances perfectly, which no realistic crawl does.
const HARD_ID_FRACTION: f64 = 0.3;
/// Momentum coefficient of pretraining (stage-two training reads it from
/// [`OptimizerParams`] instead, defaulting to the same value).
const PRETRAIN_MOMENTUM: f64 = 0.9;

/// Largest `alpha` at which an idealized structured-NC prediction (uniform
/// over `m` of `k` classes) still scores `>= 0` against the uniform
/// reference vector: `(m/k) * log(m) / log(k)`.
pub fn detectable_alpha_bound(m: usize, k: usize) -> f64 {
    (m as f64 / k as f64) * (m as f64).ln() / (k as f64).ln()
}

/// Mixes a base seed with a stream tag into an independent stream seed
/// (the splitmix64 finalizer, a bijective avalanche mixer).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Errors from simulation and the training loop.
#[derive(Debug, Error)]
pub enum SimError {
    /// Centroid construction places class `j` on axis `j`, so `d >= k`.
    #[error("feature dimension d = {d} must be at least the class count k = {k}")]
    InvalidDimensions { k: usize, d: usize },
    /// Rates or counts that cannot be realized.
    #[error("infeasible configuration: {reason}")]
    InfeasibleRates { reason: String },
    /// A sweep or report was requested from a run with zero iterations.
    #[error("this operation needs num_iters >= 1")]
    NoIterations,
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Relabel(#[from] RelabelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// Configuration of the synthetic dataset generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Number of classes.
    pub k: usize,
    /// Feature dimension (must be at least `k`).
    pub d: usize,
    /// Size of the clean split (correct labels, no NC).
    pub n_clean: usize,
    /// Size of the main split.
    pub n_main: usize,
    /// Fraction of non-NC main instances whose label is flipped.
    pub noise_rate: f64,
    /// Fraction of main instances planted as ambiguous (structured) NC.
    pub nc_ambiguous_rate: f64,
    /// Fraction of main instances planted as out-of-distribution NC.
    pub nc_ood_rate: f64,
    /// Distance of each class centroid from the origin; unit-variance
    /// isotropic noise is added on top, so this controls separability.
    pub class_separation: f64,
    /// Generator seed.
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            k: 10,
            d: 10,
            n_clean: 300,
            n_main: 600,
            noise_rate: 0.15,
            nc_ambiguous_rate: 0.25,
            nc_ood_rate: 0.10,
            class_separation: 4.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.k < 2 || self.d < self.k {
            return Err(SimError::InvalidDimensions {
                k: self.k,
                d: self.d,
            });
        }
        for (name, rate) in [
            ("noise_rate", self.noise_rate),
            ("nc_ambiguous_rate", self.nc_ambiguous_rate),
            ("nc_ood_rate", self.nc_ood_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(SimError::InfeasibleRates {
                    reason: format!("{name} = {rate} outside [0, 1]"),
                });
            }
        }
        if self.n_clean < self.k {
            return Err(SimError::InfeasibleRates {
                reason: format!(
                    "n_clean = {} cannot cover every one of the {} classes",
                    self.n_clean, self.k
                ),
            });
        }
        let n_amb = (self.n_main as f64 * self.nc_ambiguous_rate).round() as usize;
        let n_ood = (self.n_main as f64 * self.nc_ood_rate).round() as usize;
        if n_amb + n_ood > self.n_main {
            return Err(SimError::InfeasibleRates {
                reason: format!(
                    "NC rates imply {} instances but n_main = {}",
                    n_amb + n_ood,
                    self.n_main
                ),
            });
        }
        Ok(())
    }
}

/// Ground-truth role of one main-split instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceFlag {
    /// In-distribution with a conforming label (including hard instances
    /// that straddle a few classes but carry one of the straddled labels).
    CleanId,
    /// In-distribution, label flipped to a wrong class.
    NoisyId,
    /// Equidistant from several class centroids; no single label fits.
    AmbiguousNc,
    /// Drawn far outside the class hull, with a random label.
    OodNc,
}

impl InstanceFlag {
    /// Whether this flag is ground-truth NC.
    pub fn is_nc(self) -> bool {
        matches!(self, InstanceFlag::AmbiguousNc | InstanceFlag::OodNc)
    }
}

/// A generated dataset: a trusted clean split and a main split with
/// planted noise and NC instances, plus ground-truth flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub clean_features: Vec<Vec<f64>>,
    pub clean_labels: Vec<usize>,
    pub main_features: Vec<Vec<f64>>,
    /// Given (possibly wrong) labels of the main split.
    pub main_labels: Vec<usize>,
    pub main_flags: Vec<InstanceFlag>,
    /// Class sizes of the clean split.
    pub manifest: DatasetManifest,
}

impl SyntheticDataset {
    pub fn k(&self) -> usize {
        self.manifest.k()
    }

    pub fn d(&self) -> usize {
        self.clean_features[0].len()
    }

    /// Ground-truth NC flags of the main split, in order.
    pub fn main_is_nc_truth(&self) -> Vec<bool> {
        self.main_flags.iter().map(|f| f.is_nc()).collect()
    }
}

/// Generates a synthetic dataset; bit-identical for equal configs.
///
/// Class `j`'s centroid sits at `class_separation` along feature axis `j`
/// with unit isotropic noise. Ambiguous-NC instances are drawn at the mean
/// of a random subset of `m = ceil(k/2)` centroids (equidistant from all
/// of them, with a tighter noise cloud so the equidistance survives the
/// draw) and a label from that subset; OOD-NC instances come from a
/// centroid at `-2·class_separation·(1,…,1)/√d`, far outside the class
/// hull, with a uniformly random label. A fraction of the ID instances
/// are hard: drawn like ambiguous instances but over only `ceil(m/2)`
/// centroids, so one of the straddled labels still fits and they count as
/// conforming ground truth.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset, SimError> {
    cfg.validate()?;
    let (k, d) = (cfg.k, cfg.d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let centroid = |class: usize| -> Vec<f64> {
        let mut c = vec![0.0; d];
        c[class] = cfg.class_separation;
        c
    };
    let sample_point = |center: &[f64], scale: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        center
            .iter()
            .map(|&c| {
                let noise: f64 = StandardNormal.sample(rng);
                c + scale * noise
            })
            .collect()
    };

    let mut clean_features = Vec::with_capacity(cfg.n_clean);
    let mut clean_labels = Vec::with_capacity(cfg.n_clean);
    for i in 0..cfg.n_clean {
        let class = i % k;
        clean_features.push(sample_point(&centroid(class), 1.0, &mut rng));
        clean_labels.push(class);
    }

    let n_amb = (cfg.n_main as f64 * cfg.nc_ambiguous_rate).round() as usize;
    let n_ood = (cfg.n_main as f64 * cfg.nc_ood_rate).round() as usize;
    let n_id = cfg.n_main - n_amb - n_ood;
    let n_noisy = (n_id as f64 * cfg.noise_rate).round() as usize;

    let mut main_features = Vec::with_capacity(cfg.n_main);
    let mut main_labels = Vec::with_capacity(cfg.n_main);
    let mut main_flags = Vec::with_capacity(cfg.n_main);

    let m = k.div_ceil(2);
    // Hard-ID instances straddle strictly fewer centroids than the
    // ambiguity-defining subset, so a single label from the straddled
    // subset still fits; they are in-distribution ground truth.
    let hard_subset = m.div_ceil(2);
    let n_hard = if hard_subset >= 2 && hard_subset < m {
        (n_id as f64 * HARD_ID_FRACTION).round() as usize
    } else {
        0
    };
    let n_easy = n_id - n_hard;

    for i in 0..n_easy {
        let class = i % k;
        main_features.push(sample_point(&centroid(class), 1.0, &mut rng));
        main_labels.push(class);
        main_flags.push(InstanceFlag::CleanId);
    }
    for _ in 0..n_hard {
        let subset = rand::seq::index::sample(&mut rng, k, hard_subset).into_vec();
        let mut center = vec![0.0; d];
        for &class in &subset {
            center[class] += cfg.class_separation / hard_subset as f64;
        }
        main_features.push(sample_point(&center, AMBIGUOUS_NOISE_SCALE, &mut rng));
        main_labels.push(subset[rng.gen_range(0..hard_subset)]);
        main_flags.push(InstanceFlag::CleanId);
    }
    // flip a random sample of ID labels uniformly to one of the other
    // k-1 classes
    for i in rand::seq::index::sample(&mut rng, n_id, n_noisy) {
        let flipped = (main_labels[i] + 1 + rng.gen_range(0..k - 1)) % k;
        main_labels[i] = flipped;
        main_flags[i] = InstanceFlag::NoisyId;
    }
    for _ in 0..n_amb {
        let subset = rand::seq::index::sample(&mut rng, k, m).into_vec();
        let mut center = vec![0.0; d];
        for &class in &subset {
            center[class] += cfg.class_separation / m as f64;
        }
        main_features.push(sample_point(&center, AMBIGUOUS_NOISE_SCALE, &mut rng));
        main_labels.push(subset[rng.gen_range(0..m)]);
        main_flags.push(InstanceFlag::AmbiguousNc);
    }
    let ood_center: Vec<f64> = vec![-2.0 * cfg.class_separation / (d as f64).sqrt(); d];
    for _ in 0..n_ood {
        main_features.push(sample_point(&ood_center, 1.0, &mut rng));
        main_labels.push(rng.gen_range(0..k));
        main_flags.push(InstanceFlag::OodNc);
    }

    let mut order: Vec<usize> = (0..cfg.n_main).collect();
    order.shuffle(&mut rng);
    let main_features: Vec<Vec<f64>> = order.iter().map(|&i| main_features[i].clone()).collect();
    let main_labels: Vec<usize> = order.iter().map(|&i| main_labels[i]).collect();
    let main_flags: Vec<InstanceFlag> = order.iter().map(|&i| main_flags[i]).collect();

    let mut class_sizes = vec![0u64; k];
    for &label in &clean_labels {
        class_sizes[label] += 1;
    }
    let manifest = DatasetManifest::new(k, class_sizes, DatasetRole::Clean)?;

    Ok(SyntheticDataset {
        clean_features,
        clean_labels,
        main_features,
        main_labels,
        main_flags,
        manifest,
    })
}

/// Which split the initial models are pretrained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainSplit {
    /// The clean split only.
    Clean,
    /// Clean plus main (with the main split's given labels).
    Union,
}

/// Optimizer and epoch-budget settings for all training phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    pub fine_tune_epochs: usize,
    /// When set, stage-two training iterates minibatches of this size in
    /// which half the instances come from the clean split and half from the
    /// main split, instead of full-batch steps. Off by default.
    pub stratified_half_batch: Option<usize>,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            pretrain_epochs: 500,
            train_epochs: 150,
            fine_tune_epochs: 10,
            stratified_half_batch: None,
        }
    }
}

/// Full configuration of one iterative run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    /// Identification `alpha` (see [`DEFAULT_SIM_ALPHA`] for why the
    /// synthetic default differs from the published training value).
    pub alpha: f64,
    pub beta: f64,
    /// Spread of the uniform-like reference set. The synthetic default
    /// (0.02, vs [`DEFAULT_TRAIN_SIGMA`]) keeps the max-over-references
    /// score of a `k = 10` simplex from inflating on borderline
    /// predictions; wider spreads suit the larger label spaces the
    /// published value was tuned for.
    pub sigma: f64,
    /// Size of the uniform-like reference set.
    pub p_count: usize,
    pub include_exact_uniform: bool,
    /// Train non-NC instances on normalized double-hot labels (ablation;
    /// measurably worse, off by default).
    pub normalize_labels: bool,
    /// Loss-term weights. The synthetic default soft-label weight is 4
    /// rather than [`DEFAULT_TRAIN_OMEGA`]'s 32: with a linear learner and
    /// full-batch steps, a weight of 32 blows up the weight norm until the
    /// softmax saturates and later iterations cannot re-identify anything.
    pub weights: LossWeights,
    pub optimizer: OptimizerParams,
    /// Hard cap on iterations; convergence may stop a run earlier.
    pub num_iters: usize,
    /// How many models feed each iteration's averaged predictions.
    pub models_to_average: usize,
    pub pretrain_split: PretrainSplit,
    /// When set, the clean batch of stage-two training is re-derived every
    /// epoch as the main instances whose current predicted probability at
    /// their given label exceeds this threshold (for corpora with no
    /// curated clean split); the static clean split is then not trained on,
    /// and fine-tuning runs on the final dynamic set.
    pub dynamic_clean_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_SIM_ALPHA,
            beta: DEFAULT_TRAIN_BETA,
            sigma: 0.02,
            p_count: DEFAULT_TRAIN_P_COUNT,
            include_exact_uniform: true,
            normalize_labels: false,
            weights: LossWeights::new(1.0, 4.0, 1.0).expect("static weights are valid"),
            optimizer: OptimizerParams::default(),
            num_iters: 3,
            models_to_average: 3,
            pretrain_split: PretrainSplit::Union,
            dynamic_clean_threshold: None,
            seed: 0,
        }
    }
}

struct Velocity {
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Velocity {
    fn zeros(model: &LinearSoftmaxModel) -> Self {
        Self {
            w: vec![0.0; model.weights().len()],
            b: vec![0.0; model.bias().len()],
        }
    }
}

fn apply_step(
    model: &mut LinearSoftmaxModel,
    grad: &Gradient,
    velocity: &mut Velocity,
    learning_rate: f64,
    momentum: f64,
) {
    for (i, v) in velocity.w.iter_mut().enumerate() {
        *v = momentum * *v - learning_rate * grad.d_weights[i];
        model.weights[i] += *v;
    }
    for (i, v) in velocity.b.iter_mut().enumerate() {
        *v = momentum * *v - learning_rate * grad.d_bias[i];
        model.bias[i] += *v;
    }
}

/// Full-batch cross-entropy training on hard labels; returns the per-epoch
/// loss trajectory (evaluated after each update).
fn train_hard_labels(
    model: &mut LinearSoftmaxModel,
    features: &[Vec<f64>],
    labels: &[OneHotVector],
    epochs: usize,
    learning_rate: f64,
    momentum: f64,
) -> Result<Vec<f64>, LossError> {
    let weights = LossWeights::new(1.0, 0.0, 0.0).expect("static weights are valid");
    let batches = TrainingBatches {
        clean_features: features,
        clean_labels: labels,
        ..Default::default()
    };
    let mut velocity = Velocity::zeros(model);
    let mut trajectory = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let grad = loss_all_gradient(model, &batches, &weights)?;
        apply_step(model, &grad, &mut velocity, learning_rate, momentum);
        trajectory.push(loss_all_forward(model, &batches, &weights)?);
    }
    Ok(trajectory)
}

fn one_hot_labels(labels: &[usize], k: usize) -> Vec<OneHotVector> {
    labels
        .iter()
        .map(|&y| OneHotVector::new(y, k).expect("generated labels are in range"))
        .collect()
}

/// Pretrains a fresh model with cross-entropy on the chosen split by
/// full-batch gradient descent (momentum 0.9). With `epochs = 0` the
/// freshly initialized model is returned unchanged.
pub fn pretrain(
    dataset: &SyntheticDataset,
    split: PretrainSplit,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> LinearSoftmaxModel {
    let (k, d) = (dataset.k(), dataset.d());
    let mut model = LinearSoftmaxModel::random_init(k, d, INIT_SCALE, seed);
    let (features, labels): (Vec<Vec<f64>>, Vec<usize>) = match split {
        PretrainSplit::Clean => (dataset.clean_features.clone(), dataset.clean_labels.clone()),
        PretrainSplit::Union => {
            let mut f = dataset.clean_features.clone();
            f.extend_from_slice(&dataset.main_features);
            let mut l = dataset.clean_labels.clone();
            l.extend_from_slice(&dataset.main_labels);
            (f, l)
        }
    };
    let labels = one_hot_labels(&labels, k);
    train_hard_labels(
        &mut model,
        &features,
        &labels,
        epochs,
        learning_rate,
        PRETRAIN_MOMENTUM,
    )
    .expect("generated batches are well-shaped");
    model
}

fn mean_predictions(
    models: &[&LinearSoftmaxModel],
    features: &[Vec<f64>],
) -> Vec<StochasticVector> {
    assert!(!models.is_empty(), "prediction averaging needs a model");
    let k = models[0].k();
    features
        .iter()
        .map(|x| {
            let mut mean = vec![0.0; k];
            for model in models {
                let s = model.forward(x);
                for (m, &sj) in mean.iter_mut().zip(s.entries()) {
                    *m += sj;
                }
            }
            for m in mean.iter_mut() {
                *m /= models.len() as f64;
            }
            StochasticVector::new(mean).expect("mean of distributions is stochastic")
        })
        .collect()
}

/// Per-instance arithmetic mean of the models' softmax outputs.
pub fn predict_all(
    models: &[LinearSoftmaxModel],
    features: &[Vec<f64>],
) -> Vec<StochasticVector> {
    let refs: Vec<&LinearSoftmaxModel> = models.iter().collect();
    mean_predictions(&refs, features)
}

/// Identification tallies for one ground-truth flag class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlagCount {
    /// How many of these instances the identifier flagged as NC.
    pub flagged: usize,
    pub total: usize,
}

/// Per-flag breakdown of one iteration's NC identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlagBreakdown {
    pub clean_id: FlagCount,
    pub noisy_id: FlagCount,
    pub ambiguous_nc: FlagCount,
    pub ood_nc: FlagCount,
}

impl FlagBreakdown {
    fn tally(flags: &[InstanceFlag], predicted_nc: &[bool]) -> Self {
        let mut counts = [FlagCount {
            flagged: 0,
            total: 0,
        }; 4];
        for (&flag, &nc) in flags.iter().zip(predicted_nc) {
            let slot = match flag {
                InstanceFlag::CleanId => &mut counts[0],
                InstanceFlag::NoisyId => &mut counts[1],
                InstanceFlag::AmbiguousNc => &mut counts[2],
                InstanceFlag::OodNc => &mut counts[3],
            };
            slot.total += 1;
            if nc {
                slot.flagged += 1;
            }
        }
        Self {
            clean_id: counts[0],
            noisy_id: counts[1],
            ambiguous_nc: counts[2],
            ood_nc: counts[3],
        }
    }
}

/// Observables of one iteration of the loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    /// Iteration index, starting at 1.
    pub t: usize,
    /// Number of main-split instances flagged NC.
    pub nc_count: usize,
    /// Identification confusion against the planted ground truth.
    pub confusion: ConfusionCounts,
    pub flag_breakdown: FlagBreakdown,
    /// Combined loss after each stage-two training epoch.
    pub train_loss: Vec<f64>,
    /// Clean loss after each fine-tuning epoch.
    pub fine_tune_loss: Vec<f64>,
    /// Accuracy of the fine-tuned model on the clean split.
    pub clean_accuracy: f64,
    /// Accuracy on main-split clean-ID instances (whose labels are correct).
    pub main_clean_id_accuracy: f64,
}

/// Soft-label roles of the main split, aligned by index.
type MainRoles = Vec<Option<DoubleHotLabel>>;

fn dynamic_clean_batch(
    model: &LinearSoftmaxModel,
    dataset: &SyntheticDataset,
    threshold: f64,
) -> (Vec<Vec<f64>>, Vec<OneHotVector>) {
    let k = dataset.k();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (x, &y) in dataset.main_features.iter().zip(&dataset.main_labels) {
        let s = model.forward(x);
        if s[y] > threshold {
            features.push(x.clone());
            labels.push(OneHotVector::new(y, k).expect("labels in range"));
        }
    }
    (features, labels)
}

/// Runs stage-two training for one iteration; returns the loss trajectory.
fn train_stage_two(
    model: &mut LinearSoftmaxModel,
    dataset: &SyntheticDataset,
    roles: &MainRoles,
    weights: &LossWeights,
    opt: &OptimizerParams,
    dynamic_clean: Option<f64>,
    shuffle_seed: u64,
) -> Result<Vec<f64>, SimError> {
    let k = dataset.k();
    let mut non_nc_features = Vec::new();
    let mut non_nc_labels = Vec::new();
    let mut nc_features = Vec::new();
    for (i, role) in roles.iter().enumerate() {
        match role {
            Some(label) => {
                non_nc_features.push(dataset.main_features[i].clone());
                non_nc_labels.push(*label);
            }
            None => nc_features.push(dataset.main_features[i].clone()),
        }
    }
    let static_clean_labels = one_hot_labels(&dataset.clean_labels, k);

    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut velocity = Velocity::zeros(model);
    let mut trajectory = Vec::with_capacity(opt.train_epochs);

    for _ in 0..opt.train_epochs {
        // The epoch's clean batch: the curated split, or (in dynamic mode)
        // the main instances the current model itself deems clean.
        let (dyn_features, dyn_labels);
        let (clean_features, clean_labels): (&[Vec<f64>], &[OneHotVector]) = match dynamic_clean {
            Some(threshold) => {
                (dyn_features, dyn_labels) = dynamic_clean_batch(model, dataset, threshold);
                (&dyn_features, &dyn_labels)
            }
            None => (&dataset.clean_features, &static_clean_labels),
        };

        if let Some(batch_size) = opt.stratified_half_batch {
            let half = (batch_size / 2).max(1);
            let mut main_order: Vec<usize> = (0..roles.len()).collect();
            main_order.shuffle(&mut rng);
            let mut clean_order: Vec<usize> = (0..clean_features.len()).collect();
            clean_order.shuffle(&mut rng);
            let mut clean_cursor = 0usize;
            for chunk in main_order.chunks(half) {
                let mut c_f = Vec::with_capacity(half);
                let mut c_l = Vec::with_capacity(half);
                if !clean_order.is_empty() {
                    for _ in 0..half {
                        let ci = clean_order[clean_cursor % clean_order.len()];
                        clean_cursor += 1;
                        c_f.push(clean_features[ci].clone());
                        c_l.push(clean_labels[ci]);
                    }
                }
                let mut nn_f = Vec::new();
                let mut nn_l = Vec::new();
                let mut n_f = Vec::new();
                for &mi in chunk {
                    match &roles[mi] {
                        Some(label) => {
                            nn_f.push(dataset.main_features[mi].clone());
                            nn_l.push(*label);
                        }
                        None => n_f.push(dataset.main_features[mi].clone()),
                    }
                }
                let batches = TrainingBatches {
                    clean_features: &c_f,
                    clean_labels: &c_l,
                    non_nc_features: &nn_f,
                    non_nc_labels: &nn_l,
                    nc_features: &n_f,
                };
                let grad = loss_all_gradient(model, &batches, weights)?;
                apply_step(model, &grad, &mut velocity, opt.learning_rate, opt.momentum);
            }
        } else {
            let batches = TrainingBatches {
                clean_features,
                clean_labels,
                non_nc_features: &non_nc_features,
                non_nc_labels: &non_nc_labels,
                nc_features: &nc_features,
            };
            let grad = loss_all_gradient(model, &batches, weights)?;
            apply_step(model, &grad, &mut velocity, opt.learning_rate, opt.momentum);
        }

        let batches = TrainingBatches {
            clean_features,
            clean_labels,
            non_nc_features: &non_nc_features,
            non_nc_labels: &non_nc_labels,
            nc_features: &nc_features,
        };
        trajectory.push(loss_all_forward(model, &batches, weights)?);
    }
    Ok(trajectory)
}

fn clean_split_accuracy(
    model: &LinearSoftmaxModel,
    dataset: &SyntheticDataset,
) -> Result<f64, SimError> {
    let predicted: Vec<usize> = dataset
        .clean_features
        .iter()
        .map(|x| model.predict_class(x))
        .collect();
    Ok(classification_accuracy(&predicted, &dataset.clean_labels)?)
}

fn main_clean_id_accuracy(
    model: &LinearSoftmaxModel,
    dataset: &SyntheticDataset,
) -> Result<f64, SimError> {
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for (i, flag) in dataset.main_flags.iter().enumerate() {
        if *flag == InstanceFlag::CleanId {
            predicted.push(model.predict_class(&dataset.main_features[i]));
            truth.push(dataset.main_labels[i]);
        }
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    Ok(classification_accuracy(&predicted, &truth)?)
}

/// Class sizes of the pretraining corpus (the source of class ratios).
fn pretrain_class_sizes(dataset: &SyntheticDataset, split: PretrainSplit) -> Vec<u64> {
    let mut sizes = vec![0u64; dataset.k()];
    for &label in &dataset.clean_labels {
        sizes[label] += 1;
    }
    if split == PretrainSplit::Union {
        for &label in &dataset.main_labels {
            sizes[label] += 1;
        }
    }
    sizes
}

/// Runs the full iterative loop.
///
/// Per iteration `t`: (1) average predictions over the most recent
/// `models_to_average` prior models (the pretrained models count as
/// iteration 0, so early iterations blend pretrained and stage-two
/// models), partition the main split with the generalized-KL rule, assign
/// soft labels; (2) re-initialize the model from scratch, train on the
/// combined loss, fine-tune on the clean split. Stops early when
/// clean-split accuracy improves by less than 0.1% over two consecutive
/// iterations; `num_iters` is a hard cap.
///
/// With `num_iters = 0`, returns the first pretrained model and no
/// reports. Fully deterministic given the dataset and `params.seed`.
pub fn run_genkl(
    dataset: &SyntheticDataset,
    params: &RunParams,
) -> Result<(LinearSoftmaxModel, Vec<IterationReport>), SimError> {
    let (k, d) = (dataset.k(), dataset.d());
    let opt = &params.optimizer;
    let models_to_average = params.models_to_average.max(1);
    let ratios = normalized_class_ratios(&pretrain_class_sizes(dataset, params.pretrain_split))?;

    let pretrained: Vec<LinearSoftmaxModel> = (0..models_to_average)
        .map(|i| {
            pretrain(
                dataset,
                params.pretrain_split,
                opt.pretrain_epochs,
                opt.learning_rate,
                derive_seed(params.seed, i as u64),
            )
        })
        .collect();

    let truth = dataset.main_is_nc_truth();
    // The prediction pool: pretrained models count as iteration 0, and each
    // iteration appends its trained model, so early iterations average a mix
    // of pretrained and stage-two models until the window fills.
    let mut pool: Vec<LinearSoftmaxModel> = pretrained.clone();
    let mut reports: Vec<IterationReport> = Vec::new();

    for t in 1..=params.num_iters {
        let take = models_to_average.min(pool.len());
        let sources: Vec<&LinearSoftmaxModel> = pool[pool.len() - take..].iter().collect();
        let predictions = mean_predictions(&sources, &dataset.main_features);
        let records: Vec<PredictionRecord> = predictions
            .into_iter()
            .enumerate()
            .map(|(i, prediction)| {
                PredictionRecord::new(i.to_string(), dataset.main_labels[i], prediction, None)
                    .expect("generated records are valid")
            })
            .collect();

        let identifier = IdentifierConfig::GenKl {
            alpha: params.alpha,
            beta: params.beta,
            sigma: params.sigma,
            p_count: params.p_count,
            p_seed: derive_seed(params.seed, 500 + t as u64),
            include_exact_uniform: params.include_exact_uniform,
        };
        let part = partition(&records, &identifier, LogBase::Two)?;
        let predicted_nc = part.nc_flags();
        let conf = confusion(&predicted_nc, &truth)?;
        let breakdown = FlagBreakdown::tally(&dataset.main_flags, &predicted_nc);

        let soft = assign_soft_labels(&part, &records, &ratios, false)?;
        let roles: MainRoles = soft
            .iter()
            .map(|(_, label)| match label {
                SoftLabel::Uniform { .. } => None,
                SoftLabel::DoubleHot(d) => Some(if params.normalize_labels {
                    DoubleHotLabel::new(
                        d.given_index(),
                        d.argmax_index(),
                        d.given_weight() / d.mass(),
                        d.argmax_weight() / d.mass(),
                    )
                    .expect("scaled weights stay in (0, 1]")
                } else {
                    *d
                }),
                SoftLabel::NormalizedDoubleHot(_) => {
                    unreachable!("assign_soft_labels(normalize = false) never normalizes")
                }
            })
            .collect();

        // Stage two: a fresh model, sharing no state with iteration t-1.
        let mut model =
            LinearSoftmaxModel::random_init(k, d, INIT_SCALE, derive_seed(params.seed, 1000 + t as u64));
        let train_loss = train_stage_two(
            &mut model,
            dataset,
            &roles,
            &params.weights,
            opt,
            params.dynamic_clean_threshold,
            derive_seed(params.seed, 2000 + t as u64),
        )?;

        let (tune_features, tune_labels): (Vec<Vec<f64>>, Vec<OneHotVector>) =
            match params.dynamic_clean_threshold {
                Some(threshold) => dynamic_clean_batch(&model, dataset, threshold),
                None => (
                    dataset.clean_features.clone(),
                    one_hot_labels(&dataset.clean_labels, k),
                ),
            };
        let fine_tune_loss = if tune_features.is_empty() {
            Vec::new()
        } else {
            train_hard_labels(
                &mut model,
                &tune_features,
                &tune_labels,
                opt.fine_tune_epochs,
                opt.learning_rate,
                opt.momentum,
            )?
        };

        let clean_accuracy = clean_split_accuracy(&model, dataset)?;
        let id_accuracy = main_clean_id_accuracy(&model, dataset)?;
        reports.push(IterationReport {
            t,
            nc_count: part.nc_count,
            confusion: conf,
            flag_breakdown: breakdown,
            train_loss,
            fine_tune_loss,
            clean_accuracy,
            main_clean_id_accuracy: id_accuracy,
        });
        pool.push(model);

        let n = reports.len();
        if n >= 3 {
            let last = reports[n - 1].clean_accuracy - reports[n - 2].clean_accuracy;
            let before = reports[n - 2].clean_accuracy - reports[n - 3].clean_accuracy;
            if last < 0.001 && before < 0.001 {
                break;
            }
        }
    }

    let final_model = if reports.is_empty() {
        pretrained[0].clone()
    } else {
        pool.last().expect("pool is never empty").clone()
    };
    Ok((final_model, reports))
}

/// The comparison baseline: plain cross-entropy on the union split's raw
/// (noisy) labels with the same epoch budget and the same clean fine-tune
/// as one iteration of the loop — so the only difference from [`run_genkl`]
/// is the NC identification and relabeling.
pub fn baseline_cross_entropy(
    dataset: &SyntheticDataset,
    opt: &OptimizerParams,
    seed: u64,
) -> Result<LinearSoftmaxModel, SimError> {
    let (k, d) = (dataset.k(), dataset.d());
    let mut model = LinearSoftmaxModel::random_init(k, d, INIT_SCALE, derive_seed(seed, 0));
    let mut features = dataset.clean_features.clone();
    features.extend_from_slice(&dataset.main_features);
    let mut labels = dataset.clean_labels.clone();
    labels.extend_from_slice(&dataset.main_labels);
    let labels = one_hot_labels(&labels, k);
    train_hard_labels(
        &mut model,
        &features,
        &labels,
        opt.pretrain_epochs + opt.train_epochs,
        opt.learning_rate,
        opt.momentum,
    )?;
    let clean_labels = one_hot_labels(&dataset.clean_labels, k);
    train_hard_labels(
        &mut model,
        &dataset.clean_features,
        &clean_labels,
        opt.fine_tune_epochs,
        opt.learning_rate,
        opt.momentum,
    )?;
    Ok(model)
}

/// One-axis-at-a-time sensitivity grids. Empty axes are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub p_count: Vec<usize>,
    pub omega2: Vec<f64>,
}

/// One sweep grid point's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Which axis was varied ("alpha", "beta", "sigma", "p_count",
    /// "omega2").
    pub axis: String,
    pub value: f64,
    /// NC count at the first iteration (the axis-sensitive observable).
    pub nc_count: usize,
    /// First-iteration identification confusion against ground truth.
    pub confusion: ConfusionCounts,
    pub f1: f64,
    pub kappa: f64,
    /// Clean-split accuracy after the full run.
    pub final_clean_accuracy: f64,
}

fn sweep_point(
    axis: &str,
    value: f64,
    dataset: &SyntheticDataset,
    params: &RunParams,
) -> Result<SweepRow, SimError> {
    let (_, reports) = run_genkl(dataset, params)?;
    let first = reports.first().ok_or(SimError::NoIterations)?;
    let last = reports.last().expect("non-empty reports");
    Ok(SweepRow {
        axis: axis.to_string(),
        value,
        nc_count: first.nc_count,
        confusion: first.confusion,
        f1: crate::metrics::f1(&first.confusion).value,
        kappa: crate::metrics::kappa(&first.confusion).value,
        final_clean_accuracy: last.clean_accuracy,
    })
}

/// Runs one full training run per grid point, varying one hyperparameter
/// at a time and holding everything else (including all seeds) fixed at
/// `base`. Rows appear in grid order, axis by axis.
pub fn sensitivity_sweep(
    dataset: &SyntheticDataset,
    base: &RunParams,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>, SimError> {
    if base.num_iters == 0 {
        return Err(SimError::NoIterations);
    }
    let mut rows = Vec::new();
    for &alpha in &grid.alpha {
        let mut params = base.clone();
        params.alpha = alpha;
        rows.push(sweep_point("alpha", alpha, dataset, &params)?);
    }
    for &beta in &grid.beta {
        let mut params = base.clone();
        params.beta = beta;
        rows.push(sweep_point("beta", beta, dataset, &params)?);
    }
    for &sigma in &grid.sigma {
        let mut params = base.clone();
        params.sigma = sigma;
        rows.push(sweep_point("sigma", sigma, dataset, &params)?);
    }
    for &p_count in &grid.p_count {
        let mut params = base.clone();
        params.p_count = p_count;
        rows.push(sweep_point("p_count", p_count as f64, dataset, &params)?);
    }
    for &omega2 in &grid.omega2 {
        let mut params = base.clone();
        params.weights = LossWeights::new(
            params.weights.omega1(),
            omega2,
            params.weights.omega3(),
        )?;
        rows.push(sweep_point("omega2", omega2, dataset, &params)?);
    }
    Ok(rows)
}
