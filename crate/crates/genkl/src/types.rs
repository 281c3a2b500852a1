//! Shared vector and record types, validated at construction.
//!
//! All types here are immutable after construction and safe to share across
//! threads. Class indices are 0-based everywhere inside this crate; any
//! 1-based convention belongs to external serialization layers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|sum - 1|` accepted when validating a stochastic vector.
///
/// Inputs outside this tolerance are rejected rather than silently
/// renormalized, so bad data stays visible.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Errors from vector and record construction.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum VectorError {
    /// An entry was negative (or NaN).
    #[error("entry {index} is negative or not a number ({value})")]
    NegativeEntry { index: usize, value: f64 },
    /// The entries do not sum to 1 within [`SUM_TOLERANCE`].
    #[error("entries sum to {sum}, outside 1 +/- {SUM_TOLERANCE}")]
    SumOutOfTolerance { sum: f64 },
    /// Fewer than two entries.
    #[error("need at least 2 entries, got {len}")]
    TooShort { len: usize },
    /// A class index does not fit the class count.
    #[error("index {index} out of range for {k} classes")]
    IndexOutOfRange { index: usize, k: usize },
    /// A weight of a double-hot label was outside (0, 1].
    #[error("weight {value} outside (0, 1]")]
    WeightOutOfRange { value: f64 },
    /// Two vectors that must share a length do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// A length-`k` probability vector: non-negative entries summing to 1.
///
/// This is the universal currency for predictions `p`, `q`. Construction
/// validates non-negativity and the sum; together these bound every entry by
/// `1 + SUM_TOLERANCE`, so no separate upper-bound check is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StochasticVector {
    entries: Vec<f64>,
}

impl StochasticVector {
    /// Validates `entries` and wraps them. Rejected inputs are errors;
    /// nothing is renormalized behind the caller's back.
    pub fn new(entries: Vec<f64>) -> Result<Self, VectorError> {
        if entries.len() < 2 {
            return Err(VectorError::TooShort { len: entries.len() });
        }
        for (index, &value) in entries.iter().enumerate() {
            // `!(value >= 0.0)` also catches NaN.
            if !(value >= 0.0) {
                return Err(VectorError::NegativeEntry { index, value });
            }
        }
        let sum: f64 = entries.iter().sum();
        if !((sum - 1.0).abs() <= SUM_TOLERANCE) {
            return Err(VectorError::SumOutOfTolerance { sum });
        }
        Ok(Self { entries })
    }

    /// The uniform vector `[1/k, ..., 1/k]`.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 2, "uniform vector needs k >= 2");
        Self {
            entries: vec![1.0 / k as f64; k],
        }
    }

    /// Number of classes `k`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Always false: construction requires at least two entries.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// The entries as a slice.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Index of the maximum entry; ties break to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.entries.iter().enumerate().skip(1) {
            if v > self.entries[best] {
                best = j;
            }
        }
        best
    }

    /// The maximum entry.
    pub fn max(&self) -> f64 {
        self.entries[self.argmax()]
    }
}

impl TryFrom<Vec<f64>> for StochasticVector {
    type Error = VectorError;

    fn try_from(entries: Vec<f64>) -> Result<Self, VectorError> {
        Self::new(entries)
    }
}

impl From<StochasticVector> for Vec<f64> {
    fn from(v: StochasticVector) -> Vec<f64> {
        v.entries
    }
}

impl std::ops::Index<usize> for StochasticVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.entries[j]
    }
}

/// A one-hot vector `e(y)`: a single unit entry at a class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotVector {
    index: usize,
    k: usize,
}

impl OneHotVector {
    pub fn new(index: usize, k: usize) -> Result<Self, VectorError> {
        if k < 2 {
            return Err(VectorError::TooShort { len: k });
        }
        if index >= k {
            return Err(VectorError::IndexOutOfRange { index, k });
        }
        Ok(Self { index, k })
    }

    /// The hot class index.
    pub fn index(&self) -> usize {
        self.index
    }

    /// Number of classes.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Expands to a full stochastic vector.
    pub fn expand(&self) -> StochasticVector {
        let mut entries = vec![0.0; self.k];
        entries[self.index] = 1.0;
        StochasticVector { entries }
    }
}

/// The 0/1 dominance indicator of a prediction vector: bit `j` is set iff
/// `q_j >= 1/k - beta`. A tie at the threshold counts as dominant.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceMask {
    bits: Vec<bool>,
    threshold: f64,
}

impl DominanceMask {
    pub(crate) fn new(bits: Vec<bool>, threshold: f64) -> Self {
        debug_assert!(bits.iter().any(|&b| b), "mask must have a set bit");
        Self { bits, threshold }
    }

    /// The threshold `1/k - beta` the mask was built with.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The 0/1 bits, one per class.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Whether entry `j` is dominant.
    pub fn is_dominant(&self, j: usize) -> bool {
        self.bits[j]
    }

    /// Number of dominant entries (always at least 1).
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// The soft label `lambda' * e(y) + lambda * e(l)`: a weighted sum of two
/// one-hot vectors. It is generally *not* stochastic, and collapses to a
/// single support index of value `lambda + lambda'` when `y = l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleHotLabel {
    given_index: usize,
    argmax_index: usize,
    given_weight: f64,
    argmax_weight: f64,
}

impl DoubleHotLabel {
    /// Builds a label from the given-label side `(y, lambda')` and the
    /// argmax side `(l, lambda)`. Both weights must lie in (0, 1]; the upper
    /// bound is slack by [`SUM_TOLERANCE`] because the max entry of a valid
    /// stochastic vector may exceed 1 by the accepted sum tolerance.
    pub fn new(
        given_index: usize,
        argmax_index: usize,
        given_weight: f64,
        argmax_weight: f64,
    ) -> Result<Self, VectorError> {
        for value in [given_weight, argmax_weight] {
            if !(value > 0.0 && value <= 1.0 + SUM_TOLERANCE) {
                return Err(VectorError::WeightOutOfRange { value });
            }
        }
        Ok(Self {
            given_index,
            argmax_index,
            given_weight,
            argmax_weight,
        })
    }

    pub fn given_index(&self) -> usize {
        self.given_index
    }

    pub fn argmax_index(&self) -> usize {
        self.argmax_index
    }

    /// The prior-belief weight `lambda'` on the given label.
    pub fn given_weight(&self) -> f64 {
        self.given_weight
    }

    /// The model-belief weight `lambda` on the argmax label.
    pub fn argmax_weight(&self) -> f64 {
        self.argmax_weight
    }

    /// Total mass `lambda + lambda'`.
    pub fn mass(&self) -> f64 {
        self.given_weight + self.argmax_weight
    }

    /// Expands to a length-`k` non-negative vector: `lambda'` at the given
    /// index, `lambda` at the argmax index, summed when the two coincide.
    pub fn expand(&self, k: usize) -> Result<Vec<f64>, VectorError> {
        for index in [self.given_index, self.argmax_index] {
            if index >= k {
                return Err(VectorError::IndexOutOfRange { index, k });
            }
        }
        let mut out = vec![0.0; k];
        out[self.given_index] += self.given_weight;
        out[self.argmax_index] += self.argmax_weight;
        Ok(out)
    }
}

/// A scored instance: an opaque id, its given class label, and the model's
/// prediction vector (plus an optional second prediction view for decision
/// rules that compare two views of the same instance).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    id: String,
    label: usize,
    prediction: StochasticVector,
    second_view: Option<StochasticVector>,
}

impl PredictionRecord {
    pub fn new(
        id: impl Into<String>,
        label: usize,
        prediction: StochasticVector,
        second_view: Option<StochasticVector>,
    ) -> Result<Self, VectorError> {
        let k = prediction.len();
        if label >= k {
            return Err(VectorError::IndexOutOfRange { index: label, k });
        }
        if let Some(view) = &second_view {
            if view.len() != k {
                return Err(VectorError::LengthMismatch {
                    left: k,
                    right: view.len(),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            label,
            prediction,
            second_view,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// 0-based given class label.
    pub fn label(&self) -> usize {
        self.label
    }

    pub fn prediction(&self) -> &StochasticVector {
        &self.prediction
    }

    pub fn second_view(&self) -> Option<&StochasticVector> {
        self.second_view.as_ref()
    }

    /// Number of classes of the prediction.
    pub fn k(&self) -> usize {
        self.prediction.len()
    }
}

/// Which split a dataset plays the role of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Main,
    Clean,
}

/// Errors from manifest construction.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ManifestError {
    #[error("class_sizes has length {len}, expected k = {k}")]
    LengthMismatch { len: usize, k: usize },
    #[error("class {index} has size 0")]
    ZeroClassSize { index: usize },
    #[error("need at least 2 classes, got {k}")]
    TooFewClasses { k: usize },
}

/// Per-class sizes of a dataset split; the source of normalized class
/// ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifestRaw", into = "ManifestRaw")]
pub struct DatasetManifest {
    k: usize,
    class_sizes: Vec<u64>,
    role: DatasetRole,
}

#[derive(Serialize, Deserialize)]
struct ManifestRaw {
    k: usize,
    class_sizes: Vec<u64>,
    role: DatasetRole,
}

impl DatasetManifest {
    pub fn new(k: usize, class_sizes: Vec<u64>, role: DatasetRole) -> Result<Self, ManifestError> {
        if k < 2 {
            return Err(ManifestError::TooFewClasses { k });
        }
        if class_sizes.len() != k {
            return Err(ManifestError::LengthMismatch {
                len: class_sizes.len(),
                k,
            });
        }
        if let Some(index) = class_sizes.iter().position(|&s| s == 0) {
            return Err(ManifestError::ZeroClassSize { index });
        }
        Ok(Self {
            k,
            class_sizes,
            role,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_sizes(&self) -> &[u64] {
        &self.class_sizes
    }

    pub fn role(&self) -> DatasetRole {
        self.role
    }
}

impl TryFrom<ManifestRaw> for DatasetManifest {
    type Error = ManifestError;

    fn try_from(raw: ManifestRaw) -> Result<Self, ManifestError> {
        Self::new(raw.k, raw.class_sizes, raw.role)
    }
}

impl From<DatasetManifest> for ManifestRaw {
    fn from(m: DatasetManifest) -> ManifestRaw {
        ManifestRaw {
            k: m.k,
            class_sizes: m.class_sizes,
            role: m.role,
        }
    }
}
