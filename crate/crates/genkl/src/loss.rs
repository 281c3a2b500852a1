//! The three training loss terms, their weighted combination, and exact
//! analytic gradients for the linear-softmax learner used in simulation.
//!
//! All losses use natural logarithms (base choice only rescales gradients)
//! and floor every log argument at [`LOG_FLOOR`] without ever mutating the
//! stored vectors. Batch terms are accumulated sequentially in input order
//! for bit-reproducibility.

use crate::types::{DoubleHotLabel, OneHotVector, StochasticVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to every log argument in the losses.
pub const LOG_FLOOR: f64 = 1e-12;

/// Errors from loss and gradient evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LossError {
    /// A loss term was asked to average over zero instances.
    #[error("batch is empty")]
    EmptyBatch,
    /// Labels and outputs differ in count.
    #[error("length mismatch: {left} labels vs {right} outputs")]
    LengthMismatch { left: usize, right: usize },
    /// A vector's dimension disagrees with the model or class count.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    /// Loss weights must not all be zero.
    #[error("at least one loss weight must be positive")]
    AllWeightsZero,
}

/// The non-negative weights `(omega1, omega2, omega3)` of the combined
/// loss; at least one must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossWeightsRaw", into = "LossWeightsRaw")]
pub struct LossWeights {
    omega1: f64,
    omega2: f64,
    omega3: f64,
}

#[derive(Serialize, Deserialize)]
struct LossWeightsRaw {
    omega1: f64,
    omega2: f64,
    omega3: f64,
}

impl LossWeights {
    pub fn new(omega1: f64, omega2: f64, omega3: f64) -> Result<Self, LossError> {
        for w in [omega1, omega2, omega3] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(LossError::AllWeightsZero);
            }
        }
        if omega1 == 0.0 && omega2 == 0.0 && omega3 == 0.0 {
            return Err(LossError::AllWeightsZero);
        }
        Ok(Self {
            omega1,
            omega2,
            omega3,
        })
    }

    pub fn omega1(&self) -> f64 {
        self.omega1
    }

    pub fn omega2(&self) -> f64 {
        self.omega2
    }

    pub fn omega3(&self) -> f64 {
        self.omega3
    }
}

impl TryFrom<LossWeightsRaw> for LossWeights {
    type Error = LossError;

    fn try_from(raw: LossWeightsRaw) -> Result<Self, LossError> {
        Self::new(raw.omega1, raw.omega2, raw.omega3)
    }
}

impl From<LossWeights> for LossWeightsRaw {
    fn from(w: LossWeights) -> LossWeightsRaw {
        LossWeightsRaw {
            omega1: w.omega1,
            omega2: w.omega2,
            omega3: w.omega3,
        }
    }
}

/// A `k`-class linear classifier with softmax output: logits
/// `z_j = W[j] · x + b_j`, probabilities `softmax(z)`.
///
/// Weights are stored row-major (`k` rows of `d` features).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    pub(crate) k: usize,
    pub(crate) d: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl LinearSoftmaxModel {
    /// All-zero parameters (uniform output for every input).
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            weights: vec![0.0; k * d],
            bias: vec![0.0; k],
        }
    }

    /// Gaussian weights of standard deviation `scale`, zero bias,
    /// deterministic in `seed`.
    pub fn random_init(k: usize, d: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..k * d)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                scale * g
            })
            .collect();
        Self {
            k,
            d,
            weights,
            bias: vec![0.0; k],
        }
    }

    /// Rebuilds a model from persisted parameters.
    pub fn from_parts(
        k: usize,
        d: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, LossError> {
        if weights.len() != k * d {
            return Err(LossError::ShapeMismatch {
                expected: k * d,
                actual: weights.len(),
            });
        }
        if bias.len() != k {
            return Err(LossError::ShapeMismatch {
                expected: k,
                actual: bias.len(),
            });
        }
        Ok(Self {
            k,
            d,
            weights,
            bias,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Raw logits `W·x + b`.
    ///
    /// # Panics
    ///
    /// Panics if `x` has the wrong dimension.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "feature dimension mismatch");
        let mut z = self.bias.clone();
        for (j, zj) in z.iter_mut().enumerate() {
            let row = &self.weights[j * self.d..(j + 1) * self.d];
            for (w, xi) in row.iter().zip(x) {
                *zj += w * xi;
            }
        }
        z
    }

    /// Softmax output (computed with max subtraction for stability).
    pub fn forward(&self, x: &[f64]) -> StochasticVector {
        let z = self.logits(x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|&zj| (zj - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        StochasticVector::new(exps.into_iter().map(|e| e / sum).collect())
            .expect("softmax output is stochastic")
    }

    /// The predicted class (argmax of the logits; ties break low).
    pub fn predict_class(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        let mut best = 0;
        for (j, &v) in z.iter().enumerate().skip(1) {
            if v > z[best] {
                best = j;
            }
        }
        best
    }

    /// Order-sensitive hash of the exact parameter bits; distinguishes
    /// freshly re-initialized parameters from carried-over ones.
    pub fn params_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &v in self.weights.iter().chain(self.bias.iter()) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

fn check_paired(left: usize, right: usize) -> Result<(), LossError> {
    if left != right {
        return Err(LossError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(LossError::EmptyBatch);
    }
    Ok(())
}

/// Cross-entropy on clean labels: the mean over instances of
/// `-ln(s_y)`, where `s` is the model output and `y` the hard label.
pub fn loss_clean(
    labels: &[OneHotVector],
    outputs: &[StochasticVector],
) -> Result<f64, LossError> {
    check_paired(labels.len(), outputs.len())?;
    let mut total = 0.0;
    for (label, output) in labels.iter().zip(outputs) {
        if label.k() != output.len() {
            return Err(LossError::ShapeMismatch {
                expected: label.k(),
                actual: output.len(),
            });
        }
        total -= output[label.index()].max(LOG_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

fn double_hot_inner(label: &DoubleHotLabel, output: &StochasticVector) -> Result<f64, LossError> {
    let k = output.len();
    for index in [label.given_index(), label.argmax_index()] {
        if index >= k {
            return Err(LossError::ShapeMismatch {
                expected: k,
                actual: index + 1,
            });
        }
    }
    Ok(label.given_weight() * output[label.given_index()]
        + label.argmax_weight() * output[label.argmax_index()])
}

/// Soft-label loss on non-NC instances: the mean of
/// `-ln(Σ_j q̄_j · s_j)`, with the inner sum floored before the log.
pub fn loss_non_nc(
    labels: &[DoubleHotLabel],
    outputs: &[StochasticVector],
) -> Result<f64, LossError> {
    check_paired(labels.len(), outputs.len())?;
    let mut total = 0.0;
    for (label, output) in labels.iter().zip(outputs) {
        total -= double_hot_inner(label, output)?.max(LOG_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Uniform-target loss on NC instances: the mean of
/// `(1/k) · Σ_j -ln(s_j)`, minimized by the uniform output at `ln k`.
pub fn loss_nc(outputs: &[StochasticVector], k: usize) -> Result<f64, LossError> {
    if outputs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut total = 0.0;
    for output in outputs {
        if output.len() != k {
            return Err(LossError::ShapeMismatch {
                expected: k,
                actual: output.len(),
            });
        }
        let mut inner = 0.0;
        for &sj in output.entries() {
            inner -= sj.max(LOG_FLOOR).ln();
        }
        total += inner / k as f64;
    }
    Ok(total / outputs.len() as f64)
}

/// The combined loss `ω₁·L_clean + ω₂·L_non-NC + ω₃·L_NC`.
///
/// An empty batch contributes 0 to its term (partitions can legitimately
/// produce an empty NC set), so this never returns `EmptyBatch`.
#[allow(clippy::too_many_arguments)]
pub fn loss_all(
    clean_labels: &[OneHotVector],
    clean_outputs: &[StochasticVector],
    non_nc_labels: &[DoubleHotLabel],
    non_nc_outputs: &[StochasticVector],
    nc_outputs: &[StochasticVector],
    k: usize,
    weights: &LossWeights,
) -> Result<f64, LossError> {
    let clean = if clean_labels.is_empty() && clean_outputs.is_empty() {
        0.0
    } else {
        loss_clean(clean_labels, clean_outputs)?
    };
    let non_nc = if non_nc_labels.is_empty() && non_nc_outputs.is_empty() {
        0.0
    } else {
        loss_non_nc(non_nc_labels, non_nc_outputs)?
    };
    let nc = if nc_outputs.is_empty() {
        0.0
    } else {
        loss_nc(nc_outputs, k)?
    };
    Ok(weights.omega1() * clean + weights.omega2() * non_nc + weights.omega3() * nc)
}

/// The three batches the combined loss trains on. Feature vectors are
/// dense rows; any batch may be empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainingBatches<'a> {
    pub clean_features: &'a [Vec<f64>],
    pub clean_labels: &'a [OneHotVector],
    pub non_nc_features: &'a [Vec<f64>],
    pub non_nc_labels: &'a [DoubleHotLabel],
    pub nc_features: &'a [Vec<f64>],
}

/// Gradient of the combined loss with respect to model parameters, in the
/// same layout as [`LinearSoftmaxModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

impl Gradient {
    fn zeros(k: usize, d: usize) -> Self {
        Self {
            d_weights: vec![0.0; k * d],
            d_bias: vec![0.0; k],
        }
    }
}

fn check_batch(
    model: &LinearSoftmaxModel,
    features: &[Vec<f64>],
    label_count: usize,
) -> Result<(), LossError> {
    if features.len() != label_count {
        return Err(LossError::LengthMismatch {
            left: label_count,
            right: features.len(),
        });
    }
    for x in features {
        if x.len() != model.d {
            return Err(LossError::ShapeMismatch {
                expected: model.d,
                actual: x.len(),
            });
        }
    }
    Ok(())
}

/// Evaluates the combined loss at the model's current parameters by running
/// forward passes over all three batches.
pub fn loss_all_forward(
    model: &LinearSoftmaxModel,
    batches: &TrainingBatches<'_>,
    weights: &LossWeights,
) -> Result<f64, LossError> {
    check_batch(model, batches.clean_features, batches.clean_labels.len())?;
    check_batch(model, batches.non_nc_features, batches.non_nc_labels.len())?;
    check_batch(model, batches.nc_features, batches.nc_features.len())?;
    let clean_outputs: Vec<StochasticVector> = batches
        .clean_features
        .iter()
        .map(|x| model.forward(x))
        .collect();
    let non_nc_outputs: Vec<StochasticVector> = batches
        .non_nc_features
        .iter()
        .map(|x| model.forward(x))
        .collect();
    let nc_outputs: Vec<StochasticVector> = batches
        .nc_features
        .iter()
        .map(|x| model.forward(x))
        .collect();
    loss_all(
        batches.clean_labels,
        &clean_outputs,
        batches.non_nc_labels,
        &non_nc_outputs,
        &nc_outputs,
        model.k,
        weights,
    )
}

/// Exact analytic gradient of the combined loss.
///
/// Per instance, the logit-space gradients are:
/// clean: `dz_m = s_m - [m = y]`;
/// non-NC with inner sum `g = Σ q̄_j s_j`: `dz_m = s_m - q̄_m·s_m / g`;
/// NC with unfloored index set `J = {j : s_j >= floor}`:
/// `dz_m = (|J|/k)·s_m - [m ∈ J]/k`.
/// Instances whose log argument is floored contribute zero gradient for
/// that term, matching the flat floored loss exactly.
pub fn loss_all_gradient(
    model: &LinearSoftmaxModel,
    batches: &TrainingBatches<'_>,
    weights: &LossWeights,
) -> Result<Gradient, LossError> {
    check_batch(model, batches.clean_features, batches.clean_labels.len())?;
    check_batch(model, batches.non_nc_features, batches.non_nc_labels.len())?;
    check_batch(model, batches.nc_features, batches.nc_features.len())?;
    let (k, d) = (model.k, model.d);
    let mut grad = Gradient::zeros(k, d);

    let accumulate = |x: &[f64], dz: &[f64], scale: f64, grad: &mut Gradient| {
        for (m, &dzm) in dz.iter().enumerate() {
            let g = scale * dzm;
            if g == 0.0 {
                continue;
            }
            let row = &mut grad.d_weights[m * d..(m + 1) * d];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
            grad.d_bias[m] += g;
        }
    };

    if !batches.clean_features.is_empty() && weights.omega1() > 0.0 {
        let scale = weights.omega1() / batches.clean_features.len() as f64;
        for (x, label) in batches.clean_features.iter().zip(batches.clean_labels) {
            if label.k() != k {
                return Err(LossError::ShapeMismatch {
                    expected: k,
                    actual: label.k(),
                });
            }
            let s = model.forward(x);
            if s[label.index()] < LOG_FLOOR {
                continue;
            }
            let dz: Vec<f64> = (0..k)
                .map(|m| s[m] - if m == label.index() { 1.0 } else { 0.0 })
                .collect();
            accumulate(x, &dz, scale, &mut grad);
        }
    }

    if !batches.non_nc_features.is_empty() && weights.omega2() > 0.0 {
        let scale = weights.omega2() / batches.non_nc_features.len() as f64;
        for (x, label) in batches.non_nc_features.iter().zip(batches.non_nc_labels) {
            let s = model.forward(x);
            let g = double_hot_inner(label, &s)?;
            if g < LOG_FLOOR {
                continue;
            }
            let mut q_bar = vec![0.0; k];
            q_bar[label.given_index()] += label.given_weight();
            q_bar[label.argmax_index()] += label.argmax_weight();
            let dz: Vec<f64> = (0..k).map(|m| s[m] - q_bar[m] * s[m] / g).collect();
            accumulate(x, &dz, scale, &mut grad);
        }
    }

    if !batches.nc_features.is_empty() && weights.omega3() > 0.0 {
        let scale = weights.omega3() / batches.nc_features.len() as f64;
        for x in batches.nc_features {
            let s = model.forward(x);
            let unfloored: Vec<bool> = s.entries().iter().map(|&sj| sj >= LOG_FLOOR).collect();
            let count = unfloored.iter().filter(|&&b| b).count() as f64;
            let dz: Vec<f64> = (0..k)
                .map(|m| {
                    (count / k as f64) * s[m] - if unfloored[m] { 1.0 / k as f64 } else { 0.0 }
                })
                .collect();
            accumulate(x, &dz, scale, &mut grad);
        }
    }

    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(entries: &[f64]) -> StochasticVector {
        StochasticVector::new(entries.to_vec()).unwrap()
    }

    fn hot(index: usize, k: usize) -> OneHotVector {
        OneHotVector::new(index, k).unwrap()
    }

    #[test]
    fn clean_loss_anchors() {
        // perfect prediction costs (essentially) nothing
        let labels = [hot(1, 3)];
        let outputs = [sv(&[0.0, 1.0, 0.0])];
        assert!(loss_clean(&labels, &outputs).unwrap().abs() < 1e-12);
        // uniform output costs ln k
        let outputs = [StochasticVector::uniform(5)];
        let labels = [hot(2, 5)];
        assert!((loss_clean(&labels, &outputs).unwrap() - 5f64.ln()).abs() < 1e-12);
        // two-instance hand mean
        let labels = [hot(0, 2), hot(1, 2)];
        let outputs = [sv(&[0.5, 0.5]), sv(&[0.25, 0.75])];
        let expected = 0.4904146265058631; // (ln 2 + ln(4/3)) / 2
        assert!((loss_clean(&labels, &outputs).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn clean_loss_errors() {
        assert!(matches!(
            loss_clean(&[], &[]),
            Err(LossError::EmptyBatch)
        ));
        let labels = [hot(0, 2)];
        assert!(matches!(
            loss_clean(&labels, &[sv(&[0.5, 0.3, 0.2])]),
            Err(LossError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            loss_clean(&labels, &[]),
            Err(LossError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn non_nc_loss_anchors() {
        let label = DoubleHotLabel::new(0, 1, 0.2, 0.7).unwrap();
        let output = sv(&[0.1, 0.8, 0.1]);
        // -ln(0.2*0.1 + 0.7*0.8) = -ln 0.58
        let expected = 0.5447271754416722;
        assert!((loss_non_nc(&[label], &[output]).unwrap() - expected).abs() < 1e-12);
        // one-support label of weight 1 met by a one-hot output costs 0
        let label = DoubleHotLabel::new(2, 2, 0.5, 0.5).unwrap();
        let output = sv(&[0.0, 0.0, 1.0]);
        assert!(loss_non_nc(&[label], &[output]).unwrap().abs() < 1e-12);
        // output orthogonal to the support hits the floor
        let label = DoubleHotLabel::new(0, 1, 0.2, 0.7).unwrap();
        let output = sv(&[0.0, 0.0, 1.0]);
        let v = loss_non_nc(&[label], &[output]).unwrap();
        assert!((v - (-LOG_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn nc_loss_anchors() {
        let u = StochasticVector::uniform(7);
        assert!((loss_nc(&[u], 7).unwrap() - 7f64.ln()).abs() < 1e-12);
        assert!((loss_nc(&[sv(&[0.5, 0.5])], 2).unwrap() - 2f64.ln()).abs() < 1e-12);
        // peaked outputs cost more than uniform
        let peaked = sv(&[0.97, 0.01, 0.01, 0.01]);
        let u4 = StochasticVector::uniform(4);
        assert!(loss_nc(&[peaked], 4).unwrap() > loss_nc(&[u4], 4).unwrap());
        assert!(matches!(loss_nc(&[], 4), Err(LossError::EmptyBatch)));
    }

    #[test]
    fn nc_loss_minimized_at_uniform() {
        // every feasible perturbation of the uniform output increases it
        let k = 6;
        let u = StochasticVector::uniform(k);
        let base = loss_nc(&[u], k).unwrap();
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let mut entries = vec![1.0 / k as f64; k];
                entries[i] += 0.01;
                entries[j] -= 0.01;
                let perturbed = loss_nc(&[sv(&entries)], k).unwrap();
                assert!(perturbed > base);
            }
        }
    }

    #[test]
    fn combined_loss_is_linear_in_weights() {
        let clean_labels = [hot(0, 3)];
        let clean_outputs = [sv(&[0.6, 0.3, 0.1])];
        let dh = [DoubleHotLabel::new(1, 2, 0.3, 0.5).unwrap()];
        let dh_outputs = [sv(&[0.2, 0.3, 0.5])];
        let nc_outputs = [sv(&[0.4, 0.4, 0.2])];

        let a = loss_clean(&clean_labels, &clean_outputs).unwrap();
        let b = loss_non_nc(&dh, &dh_outputs).unwrap();
        let c = loss_nc(&nc_outputs, 3).unwrap();

        let w = LossWeights::new(1.0, 32.0, 1.0).unwrap();
        let combined = loss_all(
            &clean_labels,
            &clean_outputs,
            &dh,
            &dh_outputs,
            &nc_outputs,
            3,
            &w,
        )
        .unwrap();
        assert_eq!(combined, a + 32.0 * b + c);

        // zeroed weights select single terms
        let w = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        let only_clean = loss_all(
            &clean_labels,
            &clean_outputs,
            &dh,
            &dh_outputs,
            &nc_outputs,
            3,
            &w,
        )
        .unwrap();
        assert_eq!(only_clean, a);
    }

    #[test]
    fn combined_loss_tolerates_empty_batches() {
        let w = LossWeights::new(1.0, 32.0, 1.0).unwrap();
        let v = loss_all(&[], &[], &[], &[], &[], 4, &w).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 2.0, 0.0).is_err());
        assert!(LossWeights::new(0.0, 32.0, 0.0).is_ok());
    }

    #[test]
    fn zero_model_outputs_uniform() {
        let model = LinearSoftmaxModel::zeros(4, 3);
        let s = model.forward(&[1.0, -2.0, 0.5]);
        for &e in s.entries() {
            assert!((e - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn random_init_is_deterministic() {
        let a = LinearSoftmaxModel::random_init(3, 5, 0.01, 42);
        let b = LinearSoftmaxModel::random_init(3, 5, 0.01, 42);
        assert_eq!(a, b);
        assert_eq!(a.params_fingerprint(), b.params_fingerprint());
        let c = LinearSoftmaxModel::random_init(3, 5, 0.01, 43);
        assert_ne!(a.params_fingerprint(), c.params_fingerprint());
    }

    #[test]
    fn from_parts_checks_shapes() {
        assert!(LinearSoftmaxModel::from_parts(2, 3, vec![0.0; 6], vec![0.0; 2]).is_ok());
        assert!(LinearSoftmaxModel::from_parts(2, 3, vec![0.0; 5], vec![0.0; 2]).is_err());
        assert!(LinearSoftmaxModel::from_parts(2, 3, vec![0.0; 6], vec![0.0; 3]).is_err());
    }

    /// Central finite difference of the combined loss along one parameter.
    fn fd_coordinate(
        model: &LinearSoftmaxModel,
        batches: &TrainingBatches<'_>,
        weights: &LossWeights,
        weight_index: Option<usize>,
        bias_index: Option<usize>,
        step: f64,
    ) -> f64 {
        let mut plus = model.clone();
        let mut minus = model.clone();
        if let Some(i) = weight_index {
            plus.weights[i] += step;
            minus.weights[i] -= step;
        }
        if let Some(i) = bias_index {
            plus.bias[i] += step;
            minus.bias[i] -= step;
        }
        let lp = loss_all_forward(&plus, batches, weights).unwrap();
        let lm = loss_all_forward(&minus, batches, weights).unwrap();
        (lp - lm) / (2.0 * step)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (k, d) = (3, 4);
        let model = LinearSoftmaxModel::random_init(k, d, 0.5, 7);
        let clean_features = vec![vec![0.3, -1.2, 0.8, 0.1], vec![1.0, 0.2, -0.4, 0.9]];
        let clean_labels = vec![hot(0, k), hot(2, k)];
        let non_nc_features = vec![vec![-0.5, 0.4, 1.1, -0.2]];
        let non_nc_labels = vec![DoubleHotLabel::new(1, 2, 0.3, 0.6).unwrap()];
        let nc_features = vec![vec![0.9, 0.9, -0.3, 0.0]];
        let batches = TrainingBatches {
            clean_features: &clean_features,
            clean_labels: &clean_labels,
            non_nc_features: &non_nc_features,
            non_nc_labels: &non_nc_labels,
            nc_features: &nc_features,
        };
        let weights = LossWeights::new(1.0, 32.0, 1.0).unwrap();
        let grad = loss_all_gradient(&model, &batches, &weights).unwrap();

        for i in 0..k * d {
            let fd = fd_coordinate(&model, &batches, &weights, Some(i), None, 1e-5);
            let a = grad.d_weights[i];
            assert!(
                (a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()) + 1e-8,
                "weight {i}: analytic {a} vs fd {fd}"
            );
        }
        for i in 0..k {
            let fd = fd_coordinate(&model, &batches, &weights, None, Some(i), 1e-5);
            let a = grad.d_bias[i];
            assert!(
                (a - fd).abs() <= 1e-4 * a.abs().max(fd.abs()) + 1e-8,
                "bias {i}: analytic {a} vs fd {fd}"
            );
        }
    }

    #[test]
    fn saturated_correct_instance_has_tiny_gradient() {
        // a confidently correct clean instance produces a near-zero update
        let mut model = LinearSoftmaxModel::zeros(2, 1);
        model.weights = vec![20.0, -20.0];
        let features = vec![vec![1.0]];
        let labels = vec![hot(0, 2)];
        let batches = TrainingBatches {
            clean_features: &features,
            clean_labels: &labels,
            ..Default::default()
        };
        let w = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        let grad = loss_all_gradient(&model, &batches, &w).unwrap();
        for g in grad.d_weights.iter().chain(grad.d_bias.iter()) {
            assert!(g.abs() < 1e-10);
        }
    }

    #[test]
    fn nc_gradient_vanishes_at_uniform_output() {
        // the zero model outputs exactly uniform, the NC loss minimum,
        // so its gradient must vanish identically
        let model = LinearSoftmaxModel::zeros(4, 2);
        let features = vec![vec![0.7, -0.3]];
        let batches = TrainingBatches {
            nc_features: &features,
            ..Default::default()
        };
        let w = LossWeights::new(0.0, 0.0, 1.0).unwrap();
        let grad = loss_all_gradient(&model, &batches, &w).unwrap();
        for g in grad.d_weights.iter().chain(grad.d_bias.iter()) {
            assert!(g.abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_checks_shapes() {
        let model = LinearSoftmaxModel::zeros(2, 2);
        let features = vec![vec![1.0, 2.0, 3.0]];
        let labels = vec![hot(0, 2)];
        let batches = TrainingBatches {
            clean_features: &features,
            clean_labels: &labels,
            ..Default::default()
        };
        let w = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            loss_all_gradient(&model, &batches, &w),
            Err(LossError::ShapeMismatch { .. })
        ));
    }
}
