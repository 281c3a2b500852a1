//! NC-instance decision procedures: the generalized-KL rule over a sampled
//! set of uniform-like vectors, plus the threshold, two-view, and gated
//! baseline rules it is evaluated against.

use crate::divergence::{
    collision_entropy, dc_kl, delta_divergence, gen_kl, js, kl, mse, normalized_entropy,
    DivergenceError, GenKlParams, LogBase,
};
use crate::types::{OneHotVector, PredictionRecord, StochasticVector, VectorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default `alpha` for NC identification benchmarks.
pub const DEFAULT_IDENTIFY_ALPHA: f64 = 1.0247;
/// Default `beta` for NC identification benchmarks.
pub const DEFAULT_IDENTIFY_BETA: f64 = 0.0665;
/// Default sampling spread `sigma` for the uniform-like set.
pub const DEFAULT_IDENTIFY_SIGMA: f64 = 0.06;
/// Default size of the uniform-like set (one sampled vector plus the exact
/// uniform vector).
pub const DEFAULT_IDENTIFY_P_COUNT: usize = 2;

/// Total budget of rejected draws before sampling gives up.
const REJECTION_BUDGET: u64 = 1_000_000;

/// Errors from NC identification.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum IdentifyError {
    /// Sampling rejected too many negative-entry draws; `sigma` is far too
    /// large for this `k`.
    #[error("gave up sampling after {attempts} rejected draws (sigma too large for k)")]
    RejectionBudgetExhausted { attempts: u64 },
    /// `sigma` was negative or not a number.
    #[error("sigma = {sigma} must be a non-negative finite number")]
    InvalidSigma { sigma: f64 },
    /// The uniform-like set would be empty.
    #[error("the reference set P must contain at least one vector")]
    EmptyReferenceSet,
    /// A two-view rule was asked to decide a record with no second view.
    #[error("record {id} has no second prediction view")]
    MissingSecondView { id: String },
    /// `gamma` outside (0, 1].
    #[error("gamma = {gamma} outside (0, 1]")]
    GammaOutOfRange { gamma: f64 },
    /// A record's prediction length disagrees with the batch class count.
    #[error("record {id}: expected {expected} classes, got {actual}")]
    KMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },
    /// Invalid divergence parameters.
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    /// Invalid vector or index input.
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// The sampled reference set `P` of uniform-like vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformLikeSet {
    vectors: Vec<StochasticVector>,
    sigma: f64,
    seed: u64,
    include_exact_uniform: bool,
}

impl UniformLikeSet {
    /// The vectors of `P`, in sampling order.
    pub fn vectors(&self) -> &[StochasticVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn include_exact_uniform(&self) -> bool {
        self.include_exact_uniform
    }
}

/// Samples `count` uniform-like vectors of length `k`.
///
/// Each entry of a draw comes from `N(1/k, sigma^2)`; draws with any
/// negative entry are rejected and resampled, and accepted draws are
/// normalized by their sum. With `include_exact_uniform` the exact uniform
/// vector is placed first and counts toward `count`. `sigma = 0` yields
/// exact uniform vectors without touching the RNG.
///
/// Deterministic given `seed`; moreover the first `n` vectors of a
/// `count = m >= n` run equal the `count = n` run (nested prefixes), which
/// makes NC sets comparable across `count` sweeps.
pub fn sample_uniform_like(
    k: usize,
    sigma: f64,
    count: usize,
    seed: u64,
    include_exact_uniform: bool,
) -> Result<UniformLikeSet, IdentifyError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(IdentifyError::InvalidSigma { sigma });
    }
    if count == 0 {
        return Err(IdentifyError::EmptyReferenceSet);
    }

    let mut vectors = Vec::with_capacity(count);
    if include_exact_uniform {
        vectors.push(StochasticVector::uniform(k));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = 1.0 / k as f64;
    let mut rejected: u64 = 0;
    while vectors.len() < count {
        if sigma == 0.0 {
            vectors.push(StochasticVector::uniform(k));
            continue;
        }
        let normal = Normal::new(mean, sigma).expect("sigma validated finite non-negative");
        let draw: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
        let sum: f64 = draw.iter().sum();
        if draw.iter().any(|&v| v < 0.0) || sum <= 0.0 {
            rejected += 1;
            if rejected >= REJECTION_BUDGET {
                return Err(IdentifyError::RejectionBudgetExhausted { attempts: rejected });
            }
            continue;
        }
        let normalized: Vec<f64> = draw.iter().map(|&v| v / sum).collect();
        vectors.push(
            StochasticVector::new(normalized)
                .expect("normalized non-negative draw is stochastic"),
        );
    }

    Ok(UniformLikeSet {
        vectors,
        sigma,
        seed,
        include_exact_uniform,
    })
}

/// The outcome of one NC decision: the flag, the method's score, and (for
/// the generalized-KL rule, when flagged) the index into `P` of a witness
/// with `gen_kl(p ‖ q) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NcDecision {
    pub is_nc: bool,
    pub score: f64,
    pub witness_index: Option<usize>,
}

/// Generalized-KL NC rule: the instance is NC iff **some** `p` in `P` has
/// `gen_kl(p ‖ q) >= 0` (the existential reading). The score is the maximum
/// over `P`, and the witness is the first index attaining it.
///
/// # Panics
///
/// Panics if `set` is empty (construct it via [`sample_uniform_like`],
/// which guarantees at least one vector).
pub fn is_nc_genkl(
    q: &StochasticVector,
    set: &UniformLikeSet,
    params: &GenKlParams,
    base: LogBase,
) -> NcDecision {
    assert!(!set.is_empty(), "is_nc_genkl needs a non-empty reference set");
    let mut best = f64::NEG_INFINITY;
    let mut best_index = 0;
    for (index, p) in set.vectors().iter().enumerate() {
        let d = gen_kl(p, q, params, base);
        if d > best {
            best = d;
            best_index = index;
        }
    }
    let is_nc = best >= 0.0;
    NcDecision {
        is_nc,
        score: best,
        witness_index: if is_nc { Some(best_index) } else { None },
    }
}

/// A single-number baseline rule compared against a tuned threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    /// NC iff `normalized_entropy(q) >= tau`.
    NormalizedEntropy,
    /// NC iff `kl(p_ref ‖ q) <= tau`.
    Kl,
    /// NC iff `mse(p_ref, q) <= tau`.
    Mse,
    /// NC iff `delta_divergence(p_ref, q) <= tau`.
    Delta,
    /// NC iff `dc_kl(p_ref ‖ q) <= tau`.
    DcKl,
}

/// Applies one of the threshold baselines with its published inequality
/// direction. `p_ref` is the fixed reference vector — the uniform vector in
/// every benchmarked configuration.
pub fn is_nc_threshold(
    method: ThresholdMethod,
    q: &StochasticVector,
    p_ref: &StochasticVector,
    tau: f64,
    base: LogBase,
) -> Result<NcDecision, IdentifyError> {
    if p_ref.len() != q.len() {
        return Err(DivergenceError::LengthMismatch {
            left: p_ref.len(),
            right: q.len(),
        }
        .into());
    }
    let (score, is_nc) = match method {
        ThresholdMethod::NormalizedEntropy => {
            let s = normalized_entropy(q);
            (s, s >= tau)
        }
        ThresholdMethod::Kl => {
            let s = kl(p_ref, q, base);
            (s, s <= tau)
        }
        ThresholdMethod::Mse => {
            let s = mse(p_ref, q)?;
            (s, s <= tau)
        }
        ThresholdMethod::Delta => {
            let s = delta_divergence(p_ref, q);
            (s, s <= tau)
        }
        ThresholdMethod::DcKl => {
            let s = dc_kl(p_ref, q, base);
            (s, s <= tau)
        }
    };
    Ok(NcDecision {
        is_nc,
        score,
        witness_index: None,
    })
}

/// Two-view rule with hyperparameters `tau_clean` and `tau_ood`:
/// NC iff `1 - JS(q ‖ e(y)) > tau_clean` and the 0/1 argmax disagreement of
/// the two views exceeds `tau_ood`.
///
/// This is the literal published rule. Its clean-side orientation looks
/// inverted relative to the cited method's intent (a high JS-similarity to
/// the given label votes *for* NC); `invert_clean_condition` switches the
/// first comparison to `<=` for the corrected variant. Neither variant is
/// silently chosen: the flag defaults to the literal rule.
///
/// The score reported is the clean-side quantity `1 - JS(q ‖ e(y))`.
pub fn is_nc_josrc(
    q: &StochasticVector,
    q_prime: &StochasticVector,
    y: usize,
    tau_clean: f64,
    tau_ood: f64,
    invert_clean_condition: bool,
    base: LogBase,
) -> Result<NcDecision, IdentifyError> {
    if q.len() != q_prime.len() {
        return Err(VectorError::LengthMismatch {
            left: q.len(),
            right: q_prime.len(),
        }
        .into());
    }
    let hot = OneHotVector::new(y, q.len())?.expand();
    let clean_score = 1.0 - js(q, &hot, base);
    let disagreement = if q.argmax() == q_prime.argmax() {
        0.0
    } else {
        1.0
    };
    let clean_votes_nc = if invert_clean_condition {
        clean_score <= tau_clean
    } else {
        clean_score > tau_clean
    };
    Ok(NcDecision {
        is_nc: clean_votes_nc && disagreement > tau_ood,
        score: clean_score,
        witness_index: None,
    })
}

/// Gated collision-entropy rule: NC iff
/// `H2((q + e(y)) / 2) >= -log(gamma)` and `z >= delta`.
///
/// `z` is an externally supplied auxiliary statistic in the gate's second
/// condition (a mixture-model posterior at full scale); callers without one
/// pass `z = 1`, and the benchmarked `delta = 0` makes the gate independent
/// of `z` anyway. The score is the midpoint collision entropy.
pub fn is_nc_dsos_gate(
    q: &StochasticVector,
    y: usize,
    gamma: f64,
    delta: f64,
    z: f64,
    base: LogBase,
) -> Result<NcDecision, IdentifyError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(IdentifyError::GammaOutOfRange { gamma });
    }
    let hot = OneHotVector::new(y, q.len())?.expand();
    let mid: Vec<f64> = q
        .entries()
        .iter()
        .zip(hot.entries())
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    let mid = StochasticVector::new(mid).expect("midpoint of two distributions is stochastic");
    let score = collision_entropy(&mid, base);
    Ok(NcDecision {
        is_nc: score >= -base.log(gamma) && z >= delta,
        score,
        witness_index: None,
    })
}

fn default_identify_alpha() -> f64 {
    DEFAULT_IDENTIFY_ALPHA
}

fn default_identify_beta() -> f64 {
    DEFAULT_IDENTIFY_BETA
}

fn default_identify_sigma() -> f64 {
    DEFAULT_IDENTIFY_SIGMA
}

fn default_identify_p_count() -> usize {
    DEFAULT_IDENTIFY_P_COUNT
}

fn default_true() -> bool {
    true
}

fn default_z() -> f64 {
    1.0
}

/// Which decision rule to run, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum IdentifierConfig {
    GenKl {
        #[serde(default = "default_identify_alpha")]
        alpha: f64,
        #[serde(default = "default_identify_beta")]
        beta: f64,
        #[serde(default = "default_identify_sigma")]
        sigma: f64,
        #[serde(default = "default_identify_p_count")]
        p_count: usize,
        #[serde(default)]
        p_seed: u64,
        #[serde(default = "default_true")]
        include_exact_uniform: bool,
    },
    NormalizedEntropy {
        tau: f64,
    },
    Kl {
        tau: f64,
    },
    Mse {
        tau: f64,
    },
    Delta {
        tau: f64,
    },
    DcKl {
        tau: f64,
    },
    JoSrc {
        tau_clean: f64,
        tau_ood: f64,
        #[serde(default)]
        invert_clean_condition: bool,
    },
    DsosGate {
        gamma: f64,
        delta: f64,
        #[serde(default = "default_z")]
        z: f64,
    },
}

/// One record's decision inside a partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordDecision {
    pub id: String,
    pub is_nc: bool,
    pub score: f64,
    pub witness_index: Option<usize>,
}

/// The result of partitioning a record set into NC / non-NC.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    /// Per-record decisions, in input order.
    pub decisions: Vec<RecordDecision>,
    pub nc_count: usize,
    pub non_nc_count: usize,
    /// The sampled reference set, when the generalized-KL rule ran.
    pub uniform_like: Option<UniformLikeSet>,
}

impl PartitionReport {
    /// Predicted NC flags in input order.
    pub fn nc_flags(&self) -> Vec<bool> {
        self.decisions.iter().map(|d| d.is_nc).collect()
    }
}

/// Partitions `records` into NC and non-NC under `cfg`.
///
/// Every record lands in exactly one class; decisions keep input order, so
/// the report is a pure function of the record sequence and config. All
/// records must share one class count.
pub fn partition(
    records: &[PredictionRecord],
    cfg: &IdentifierConfig,
    base: LogBase,
) -> Result<PartitionReport, IdentifyError> {
    let mut report = PartitionReport {
        decisions: Vec::with_capacity(records.len()),
        nc_count: 0,
        non_nc_count: 0,
        uniform_like: None,
    };
    let Some(first) = records.first() else {
        return Ok(report);
    };
    let k = first.k();
    for record in records {
        if record.k() != k {
            return Err(IdentifyError::KMismatch {
                id: record.id().to_string(),
                expected: k,
                actual: record.k(),
            });
        }
    }

    enum Prepared {
        GenKl(UniformLikeSet, GenKlParams),
        Threshold(ThresholdMethod, StochasticVector, f64),
        JoSrc(f64, f64, bool),
        DsosGate(f64, f64, f64),
    }

    let prepared = match *cfg {
        IdentifierConfig::GenKl {
            alpha,
            beta,
            sigma,
            p_count,
            p_seed,
            include_exact_uniform,
        } => {
            let params = GenKlParams::new(alpha, beta, k)?;
            let set = sample_uniform_like(k, sigma, p_count, p_seed, include_exact_uniform)?;
            Prepared::GenKl(set, params)
        }
        IdentifierConfig::NormalizedEntropy { tau } => {
            Prepared::Threshold(ThresholdMethod::NormalizedEntropy, StochasticVector::uniform(k), tau)
        }
        IdentifierConfig::Kl { tau } => {
            Prepared::Threshold(ThresholdMethod::Kl, StochasticVector::uniform(k), tau)
        }
        IdentifierConfig::Mse { tau } => {
            Prepared::Threshold(ThresholdMethod::Mse, StochasticVector::uniform(k), tau)
        }
        IdentifierConfig::Delta { tau } => {
            Prepared::Threshold(ThresholdMethod::Delta, StochasticVector::uniform(k), tau)
        }
        IdentifierConfig::DcKl { tau } => {
            Prepared::Threshold(ThresholdMethod::DcKl, StochasticVector::uniform(k), tau)
        }
        IdentifierConfig::JoSrc {
            tau_clean,
            tau_ood,
            invert_clean_condition,
        } => Prepared::JoSrc(tau_clean, tau_ood, invert_clean_condition),
        IdentifierConfig::DsosGate { gamma, delta, z } => Prepared::DsosGate(gamma, delta, z),
    };

    for record in records {
        let decision = match &prepared {
            Prepared::GenKl(set, params) => is_nc_genkl(record.prediction(), set, params, base),
            Prepared::Threshold(method, p_ref, tau) => {
                is_nc_threshold(*method, record.prediction(), p_ref, *tau, base)?
            }
            Prepared::JoSrc(tau_clean, tau_ood, invert) => {
                let second = record.second_view().ok_or_else(|| {
                    IdentifyError::MissingSecondView {
                        id: record.id().to_string(),
                    }
                })?;
                is_nc_josrc(
                    record.prediction(),
                    second,
                    record.label(),
                    *tau_clean,
                    *tau_ood,
                    *invert,
                    base,
                )?
            }
            Prepared::DsosGate(gamma, delta, z) => {
                is_nc_dsos_gate(record.prediction(), record.label(), *gamma, *delta, *z, base)?
            }
        };
        if decision.is_nc {
            report.nc_count += 1;
        } else {
            report.non_nc_count += 1;
        }
        report.decisions.push(RecordDecision {
            id: record.id().to_string(),
            is_nc: decision.is_nc,
            score: decision.score,
            witness_index: decision.witness_index,
        });
    }

    if let Prepared::GenKl(set, _) = prepared {
        report.uniform_like = Some(set);
    }
    Ok(report)
}
