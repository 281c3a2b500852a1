//! Entropies and divergences over probability vectors, including the
//! (α,β)-generalized KL divergence.
//!
//! All functions are pure and follow the convention `0 · log 0 = 0`.
//! Support violations in KL-family divergences return `f64::INFINITY` as a
//! first-class value rather than an error, so downstream thresholding can
//! compare against it directly.

use crate::types::{DominanceMask, StochasticVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from divergence parameter validation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DivergenceError {
    /// `beta` outside `[0, 1/k]`.
    #[error("beta = {beta} outside [0, {max}]")]
    BetaOutOfRange { beta: f64, max: f64 },
    /// `alpha` not a positive finite number (or negative where a
    /// non-negative order is required).
    #[error("alpha = {alpha} out of range")]
    AlphaOutOfRange { alpha: f64 },
    /// Rényi entropy is undefined at order 1 (the Shannon limit).
    #[error("Renyi entropy is undefined at alpha = 1")]
    AlphaEqualsOne,
    /// Two vectors that must share a length do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// A declared class count disagrees with a vector's length.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    /// Fewer than two classes.
    #[error("need at least 2 classes, got {k}")]
    TooFewClasses { k: usize },
}

/// Logarithm base used throughout one divergence evaluation.
///
/// The default is base 2; natural log is available for training losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LogBase {
    /// Base-2 logarithms (values in bits).
    #[default]
    #[serde(rename = "2")]
    Two,
    /// Natural logarithms (values in nats).
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    /// `log(x)` in this base.
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GenKlParamsRaw {
    alpha: f64,
    beta: f64,
    k: usize,
    #[serde(default)]
    masked_entropy: bool,
}

/// Validated parameters `(alpha, beta)` of the generalized KL divergence for
/// a fixed class count `k`.
///
/// Requires `alpha > 0` and `0 <= beta <= 1/k`. At `alpha = 1, beta = 1/k`
/// the divergence coincides exactly with ordinary KL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GenKlParamsRaw", into = "GenKlParamsRaw")]
pub struct GenKlParams {
    alpha: f64,
    beta: f64,
    k: usize,
    masked_entropy: bool,
}

impl GenKlParams {
    pub fn new(alpha: f64, beta: f64, k: usize) -> Result<Self, DivergenceError> {
        if k < 2 {
            return Err(DivergenceError::TooFewClasses { k });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DivergenceError::AlphaOutOfRange { alpha });
        }
        let max = 1.0 / k as f64;
        if !(beta >= 0.0 && beta <= max) {
            return Err(DivergenceError::BetaOutOfRange { beta, max });
        }
        Ok(Self {
            alpha,
            beta,
            k,
            masked_entropy: false,
        })
    }

    /// Switches the entropy term to run over the dominance-masked `p`
    /// instead of the full `p`. Off by default: the unmasked form is the
    /// defining one, and the tabulated reference values confirm it. The
    /// masked variant matches a published pseudocode transcription that
    /// zeroes `p` in place before evaluating, and is kept for comparison.
    pub fn with_masked_entropy(mut self, masked: bool) -> Self {
        self.masked_entropy = masked;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn masked_entropy(&self) -> bool {
        self.masked_entropy
    }

    /// The dominance threshold `1/k - beta`. Zero exactly when `beta = 1/k`.
    pub fn threshold(&self) -> f64 {
        1.0 / self.k as f64 - self.beta
    }
}

impl TryFrom<GenKlParamsRaw> for GenKlParams {
    type Error = DivergenceError;

    fn try_from(raw: GenKlParamsRaw) -> Result<Self, DivergenceError> {
        Ok(Self::new(raw.alpha, raw.beta, raw.k)?.with_masked_entropy(raw.masked_entropy))
    }
}

impl From<GenKlParams> for GenKlParamsRaw {
    fn from(p: GenKlParams) -> GenKlParamsRaw {
        GenKlParamsRaw {
            alpha: p.alpha,
            beta: p.beta,
            k: p.k,
            masked_entropy: p.masked_entropy,
        }
    }
}

/// Shannon entropy `H(p) = -Σ p_j log(p_j)`, in `[0, log k]`.
pub fn shannon_entropy(p: &StochasticVector, base: LogBase) -> f64 {
    let mut h = 0.0;
    for &pj in p.entries() {
        if pj > 0.0 {
            h -= pj * base.log(pj);
        }
    }
    h
}

/// Cross entropy `H(p, q) = -Σ p_j log(q_j)` for a non-negative weight
/// vector `p` (not necessarily stochastic) against a distribution `q`.
///
/// Returns `+∞` when some `p_j > 0` sits on `q_j = 0`.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn cross_entropy(p: &[f64], q: &StochasticVector, base: LogBase) -> f64 {
    assert_eq!(p.len(), q.len(), "cross_entropy length mismatch");
    let mut h = 0.0;
    for (&pj, &qj) in p.iter().zip(q.entries()) {
        if pj > 0.0 {
            if qj == 0.0 {
                return f64::INFINITY;
            }
            h -= pj * base.log(qj);
        }
    }
    h
}

/// Entropy of `q` divided by the maximum possible entropy `log k`.
/// Base-independent; always in `[0, 1]`.
pub fn normalized_entropy(q: &StochasticVector) -> f64 {
    shannon_entropy(q, LogBase::E) / (q.len() as f64).ln()
}

/// Kullback-Leibler divergence `KL(p ‖ q) = Σ p_j log(p_j / q_j)`.
///
/// Non-negative; zero iff `p = q`; `+∞` on a support violation.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn kl(p: &StochasticVector, q: &StochasticVector, base: LogBase) -> f64 {
    assert_eq!(p.len(), q.len(), "kl length mismatch");
    let mut d = 0.0;
    for (&pj, &qj) in p.entries().iter().zip(q.entries()) {
        if pj > 0.0 {
            if qj == 0.0 {
                return f64::INFINITY;
            }
            d += pj * base.log(pj / qj);
        }
    }
    d
}

/// The dominance indicator of `q` at threshold `1/k - beta`: bit `j` is set
/// iff `q_j >= 1/k - beta`, with a tie at the exact threshold counting as
/// dominant. The comparison is exact floating `>=` with no epsilon, so
/// boundary behavior is deterministic and visible.
///
/// At least one bit is always set, because the maximum entry is at least the
/// mean `1/k`, which is at least the threshold.
pub fn dominant_mask(
    q: &StochasticVector,
    beta: f64,
    k: usize,
) -> Result<DominanceMask, DivergenceError> {
    if q.len() != k {
        return Err(DivergenceError::DimensionMismatch {
            expected: k,
            actual: q.len(),
        });
    }
    let max = 1.0 / k as f64;
    if !(beta >= 0.0 && beta <= max) {
        return Err(DivergenceError::BetaOutOfRange { beta, max });
    }
    let threshold = max - beta;
    let bits = q.entries().iter().map(|&qj| qj >= threshold).collect();
    Ok(DominanceMask::new(bits, threshold))
}

/// The (α,β)-generalized KL divergence
/// `D(p ‖ q) = -α·H(p) + H(βp, q)`,
/// where `βp` zeroes `p` on the non-dominant entries of `q` and the entropy
/// term uses the full, unmasked `p`.
///
/// For `beta < 1/k` the result is finite and lies in
/// `[-α·log k, log(1/(1/k - beta))]`; `+∞` is possible only at
/// `beta = 1/k` (all entries dominant, threshold 0) when `p` has mass on a
/// zero of `q`.
///
/// # Panics
///
/// Panics if `p`, `q`, and `params` disagree on the class count.
pub fn gen_kl(
    p: &StochasticVector,
    q: &StochasticVector,
    params: &GenKlParams,
    base: LogBase,
) -> f64 {
    let k = params.k();
    assert_eq!(p.len(), k, "gen_kl: p length differs from params.k");
    assert_eq!(q.len(), k, "gen_kl: q length differs from params.k");
    let mask =
        dominant_mask(q, params.beta(), k).expect("params validated at construction");

    let entropy = if params.masked_entropy() {
        let mut h = 0.0;
        for (j, &pj) in p.entries().iter().enumerate() {
            if mask.is_dominant(j) && pj > 0.0 {
                h -= pj * base.log(pj);
            }
        }
        h
    } else {
        shannon_entropy(p, base)
    };

    let mut cross = 0.0;
    for (j, &pj) in p.entries().iter().enumerate() {
        if mask.is_dominant(j) && pj > 0.0 {
            let qj = q[j];
            if qj == 0.0 {
                return f64::INFINITY;
            }
            cross -= pj * base.log(qj);
        }
    }

    -params.alpha() * entropy + cross
}

/// Jeffreys divergence `½·KL(p ‖ q) + ½·KL(q ‖ p)`: a symmetric analog of
/// KL. `+∞` when either direction has a support violation.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn jeffreys(p: &StochasticVector, q: &StochasticVector, base: LogBase) -> f64 {
    0.5 * kl(p, q, base) + 0.5 * kl(q, p, base)
}

/// Jensen-Shannon divergence via the midpoint `m = (p + q)/2`:
/// `½·KL(p ‖ m) + ½·KL(q ‖ m)`.
///
/// Always finite and symmetric; bounded in `[0, 1]` for base 2.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn js(p: &StochasticVector, q: &StochasticVector, base: LogBase) -> f64 {
    assert_eq!(p.len(), q.len(), "js length mismatch");
    let mid: Vec<f64> = p
        .entries()
        .iter()
        .zip(q.entries())
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    let mid = StochasticVector::new(mid).expect("midpoint of two distributions is stochastic");
    0.5 * kl(p, &mid, base) + 0.5 * kl(q, &mid, base)
}

/// Decision-cognizant KL divergence: with `s = argmax p`, `t = argmax q`,
/// and `Λ` the remaining indices aggregated into one bucket,
/// `Σ_{j ∈ {s,t}} q_j·log(q_j / p_j) + q_Λ·log(q_Λ / p_Λ)`.
///
/// The index set `{s, t}` collapses to one term when the argmaxes coincide.
/// Note the ratios run `q/p` — the orientation is reversed relative to the
/// usual KL convention, and is implemented verbatim as defined. `+∞` when a
/// summed `q`-mass sits on zero `p`-mass.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn dc_kl(p: &StochasticVector, q: &StochasticVector, base: LogBase) -> f64 {
    assert_eq!(p.len(), q.len(), "dc_kl length mismatch");
    let s = p.argmax();
    let t = q.argmax();

    let mut d = 0.0;
    let term = |p_mass: f64, q_mass: f64| -> Option<f64> {
        if q_mass > 0.0 {
            if p_mass == 0.0 {
                return None;
            }
            Some(q_mass * base.log(q_mass / p_mass))
        } else {
            Some(0.0)
        }
    };

    let mut picked = vec![s];
    if t != s {
        picked.push(t);
    }
    for &j in &picked {
        match term(p[j], q[j]) {
            Some(v) => d += v,
            None => return f64::INFINITY,
        }
    }

    let mut p_rest = 0.0;
    let mut q_rest = 0.0;
    for j in 0..p.len() {
        if j != s && j != t {
            p_rest += p[j];
            q_rest += q[j];
        }
    }
    match term(p_rest, q_rest) {
        Some(v) => d + v,
        None => f64::INFINITY,
    }
}

/// Delta divergence: with `s = argmax p`, `t = argmax q`, and `Λ` the
/// aggregated remainder, `½·[Σ_{j ∈ {s,t}} |p_j - q_j| + |p_Λ - q_Λ|]`.
///
/// Symmetric and bounded in `[0, 1]`.
///
/// # Panics
///
/// Panics if the lengths differ.
pub fn delta_divergence(p: &StochasticVector, q: &StochasticVector) -> f64 {
    assert_eq!(p.len(), q.len(), "delta_divergence length mismatch");
    let s = p.argmax();
    let t = q.argmax();

    let mut sum = (p[s] - q[s]).abs();
    if t != s {
        sum += (p[t] - q[t]).abs();
    }
    let mut p_rest = 0.0;
    let mut q_rest = 0.0;
    for j in 0..p.len() {
        if j != s && j != t {
            p_rest += p[j];
            q_rest += q[j];
        }
    }
    sum += (p_rest - q_rest).abs();
    0.5 * sum
}

/// Rényi entropy of order `alpha`:
/// `(1/(1-α))·log(Σ_{p_j > 0} p_j^α)`.
///
/// Requires `alpha >= 0`, `alpha != 1`. Zero entries are skipped, so
/// `alpha = 0` gives the Hartley entropy `log |support|`.
pub fn renyi_entropy(
    p: &StochasticVector,
    alpha: f64,
    base: LogBase,
) -> Result<f64, DivergenceError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DivergenceError::AlphaOutOfRange { alpha });
    }
    if alpha == 1.0 {
        return Err(DivergenceError::AlphaEqualsOne);
    }
    let sum: f64 = p
        .entries()
        .iter()
        .filter(|&&pj| pj > 0.0)
        .map(|&pj| pj.powf(alpha))
        .sum();
    Ok(base.log(sum) / (1.0 - alpha))
}

/// Collision entropy `-log(Σ p_j²)` — the order-2 special case of Rényi
/// entropy, delegated there so the two agree exactly.
pub fn collision_entropy(p: &StochasticVector, base: LogBase) -> f64 {
    renyi_entropy(p, 2.0, base).expect("order 2 is a valid Renyi order")
}

/// Mean squared error `(1/k)·Σ (p_j - q_j)²`.
pub fn mse(p: &StochasticVector, q: &StochasticVector) -> Result<f64, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let sum: f64 = p
        .entries()
        .iter()
        .zip(q.entries())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sum / p.len() as f64)
}
