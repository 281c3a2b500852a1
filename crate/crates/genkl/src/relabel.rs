//! Soft-label generation: uniform labels for NC instances, double-hot
//! labels for non-NC instances.

use crate::identify::PartitionReport;
use crate::types::{DoubleHotLabel, PredictionRecord, StochasticVector};
use std::collections::HashMap;
use thiserror::Error;

/// Errors from relabeling.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum RelabelError {
    /// A class size of zero cannot be inverted into a ratio.
    #[error("class {index} has size 0")]
    ZeroClassSize { index: usize },
    /// No class sizes were supplied.
    #[error("class sizes are empty")]
    EmptyClassSizes,
    /// A double-hot label with no mass cannot be normalized.
    #[error("double-hot label has zero total mass")]
    ZeroMass,
    /// A record id is missing from the partition report.
    #[error("record {id} has no partition decision")]
    IdMismatch { id: String },
    /// A class index does not fit the class count.
    #[error("index {index} out of range for {k} classes")]
    IndexOutOfRange { index: usize, k: usize },
    /// Two inputs that must share a length do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Normalized inverse class sizes `v_j = (1/k_j) / Σ_i (1/k_i)`: a
/// stochastic vector in which rarer classes carry more weight. Entry `v_y`
/// becomes the given-label weight of a double-hot label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRatioVector {
    entries: Vec<f64>,
}

impl ClassRatioVector {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl std::ops::Index<usize> for ClassRatioVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.entries[j]
    }
}

/// Computes the normalized class ratios from per-class sizes.
pub fn normalized_class_ratios(class_sizes: &[u64]) -> Result<ClassRatioVector, RelabelError> {
    if class_sizes.is_empty() {
        return Err(RelabelError::EmptyClassSizes);
    }
    if let Some(index) = class_sizes.iter().position(|&s| s == 0) {
        return Err(RelabelError::ZeroClassSize { index });
    }
    let inverses: Vec<f64> = class_sizes.iter().map(|&s| 1.0 / s as f64).collect();
    let total: f64 = inverses.iter().sum();
    Ok(ClassRatioVector {
        entries: inverses.into_iter().map(|w| w / total).collect(),
    })
}

/// Builds the double-hot label `q̄ = λ'·e(y) + λ·e(ℓ)` for a non-NC record:
/// `λ' = v_y` (prior belief in the given label, from class ratios) and
/// `λ = max(q)` at `ℓ = argmax(q)` (the model's belief). Argmax ties break
/// to the lowest index. Both weights are read bit-exactly from the inputs.
pub fn make_double_hot(
    q: &StochasticVector,
    y: usize,
    v: &ClassRatioVector,
) -> Result<DoubleHotLabel, RelabelError> {
    if v.len() != q.len() {
        return Err(RelabelError::LengthMismatch {
            left: v.len(),
            right: q.len(),
        });
    }
    if y >= q.len() {
        return Err(RelabelError::IndexOutOfRange {
            index: y,
            k: q.len(),
        });
    }
    let argmax = q.argmax();
    DoubleHotLabel::new(y, argmax, v[y], q.max())
        .map_err(|_| RelabelError::ZeroMass)
}

/// Normalizes a double-hot label into a stochastic vector by dividing the
/// expanded vector by its total mass `λ + λ'`. The support and the ratio
/// `λ' : λ` are preserved; when the two support indices coincide the result
/// is one-hot.
pub fn normalize_double_hot(
    d: &DoubleHotLabel,
    k: usize,
) -> Result<StochasticVector, RelabelError> {
    let mass = d.mass();
    if mass <= 0.0 {
        return Err(RelabelError::ZeroMass);
    }
    let expanded = d.expand(k).map_err(|_| RelabelError::IndexOutOfRange {
        index: d.given_index().max(d.argmax_index()),
        k,
    })?;
    let entries: Vec<f64> = expanded.into_iter().map(|x| x / mass).collect();
    Ok(StochasticVector::new(entries).expect("normalized double-hot sums to 1"))
}

/// A soft label assigned to one training instance.
#[derive(Debug, Clone, PartialEq)]
pub enum SoftLabel {
    /// The uniform vector `[1/k, ..., 1/k]`, assigned to NC instances.
    Uniform { k: usize },
    /// The (unnormalized) double-hot label, assigned to non-NC instances.
    DoubleHot(DoubleHotLabel),
    /// The normalized double-hot variant (ablation only; normalization
    /// measurably hurts accuracy and is off by default).
    NormalizedDoubleHot(StochasticVector),
}

/// Assigns a soft label to every record: NC records receive the uniform
/// label, non-NC records a double-hot label built from their own prediction
/// and given label (normalized iff `normalize` is set).
///
/// Output order follows `records`; every record id appears exactly once.
/// A record whose id has no decision in `report` is an error.
pub fn assign_soft_labels(
    report: &PartitionReport,
    records: &[PredictionRecord],
    v: &ClassRatioVector,
    normalize: bool,
) -> Result<Vec<(String, SoftLabel)>, RelabelError> {
    let decision_by_id: HashMap<&str, bool> = report
        .decisions
        .iter()
        .map(|d| (d.id.as_str(), d.is_nc))
        .collect();

    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let &is_nc = decision_by_id
            .get(record.id())
            .ok_or_else(|| RelabelError::IdMismatch {
                id: record.id().to_string(),
            })?;
        let label = if is_nc {
            SoftLabel::Uniform { k: record.k() }
        } else {
            let d = make_double_hot(record.prediction(), record.label(), v)?;
            if normalize {
                SoftLabel::NormalizedDoubleHot(normalize_double_hot(&d, record.k())?)
            } else {
                SoftLabel::DoubleHot(d)
            }
        };
        out.push((record.id().to_string(), label));
    }
    Ok(out)
}
