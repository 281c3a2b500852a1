//! The ten-row anchor fixture: prediction vectors over 14 classes together
//! with the published anchor scores they were reported with (generalized KL
//! at α = 0.7, β = 0.03, plain KL, and normalized entropy, all of the
//! uniform distribution against each row, base 2).
//!
//! The rows are displayed at two decimals and do not all sum to exactly 1;
//! the fixture renormalizes each row by its sum before scoring. Each row's
//! given label is its argmax class: the source table lists predictions
//! only, and the argmax choice keeps every row a well-formed record without
//! affecting any anchored score.

use genkl::{PredictionRecord, StochasticVector};

/// Number of classes in the fixture.
pub const K: usize = 14;
/// The α the anchor scores were computed at.
pub const ALPHA: f64 = 0.7;
/// The β the anchor scores were computed at.
pub const BETA: f64 = 0.03;

/// One anchor row: id, displayed (pre-normalization) prediction vector, and
/// the published `(gen_kl, kl, normalized_entropy)` anchor triple.
pub struct AnchorRow {
    pub id: &'static str,
    pub raw: [f64; 14],
    pub gen_kl: f64,
    pub kl: f64,
    pub normalized_entropy: f64,
}

/// The ten anchor rows, in their published order.
pub const ROWS: [AnchorRow; 10] = [
    AnchorRow {
        id: "OOD-1",
        raw: [
            0.08, 0.11, 0.05, 0.05, 0.05, 0.12, 0.02, 0.06, 0.03, 0.04, 0.08, 0.13, 0.15, 0.04,
        ],
        gen_kl: 0.267,
        kl: 0.215,
        normalized_entropy: 0.946,
    },
    AnchorRow {
        id: "AID-1",
        raw: [
            0.09, 0.02, 0.07, 0.04, 0.04, 0.05, 0.05, 0.04, 0.02, 0.14, 0.14, 0.14, 0.08, 0.07,
        ],
        gen_kl: 0.265,
        kl: 0.240,
        normalized_entropy: 0.940,
    },
    AnchorRow {
        id: "C-1",
        raw: [
            0.15, 0.11, 0.05, 0.10, 0.04, 0.03, 0.13, 0.06, 0.06, 0.08, 0.03, 0.11, 0.02, 0.03,
        ],
        gen_kl: -0.422,
        kl: 0.268,
        normalized_entropy: 0.937,
    },
    AnchorRow {
        id: "OOD-2",
        raw: [
            0.05, 0.06, 0.05, 0.03, 0.07, 0.06, 0.05, 0.07, 0.02, 0.03, 0.25, 0.11, 0.07, 0.09,
        ],
        gen_kl: 0.296,
        kl: 0.285,
        normalized_entropy: 0.917,
    },
    AnchorRow {
        id: "AID-2",
        raw: [
            0.02, 0.10, 0.07, 0.01, 0.06, 0.07, 0.11, 0.08, 0.05, 0.09, 0.09, 0.04, 0.03, 0.16,
        ],
        gen_kl: 0.195,
        kl: 0.313,
        normalized_entropy: 0.941,
    },
    AnchorRow {
        id: "OOD-3",
        raw: [
            0.11, 0.09, 0.04, 0.02, 0.06, 0.05, 0.04, 0.05, 0.02, 0.02, 0.10, 0.19, 0.10, 0.09,
        ],
        gen_kl: 0.237,
        kl: 0.319,
        normalized_entropy: 0.927,
    },
    AnchorRow {
        id: "AID-3",
        raw: [
            0.08, 0.07, 0.10, 0.00, 0.11, 0.02, 0.06, 0.08, 0.02, 0.05, 0.22, 0.09, 0.05, 0.06,
        ],
        gen_kl: 0.221,
        kl: 0.482,
        normalized_entropy: 0.910,
    },
    AnchorRow {
        id: "OOD-4",
        raw: [
            0.12, 0.05, 0.11, 0.01, 0.06, 0.05, 0.05, 0.05, 0.04, 0.06, 0.03, 0.02, 0.07, 0.29,
        ],
        gen_kl: 0.332,
        kl: 0.509,
        normalized_entropy: 0.872,
    },
    AnchorRow {
        id: "AID-4",
        raw: [
            0.06, 0.06, 0.07, 0.05, 0.05, 0.16, 0.05, 0.07, 0.01, 0.09, 0.00, 0.10, 0.21, 0.01,
        ],
        gen_kl: 0.218,
        kl: 0.725,
        normalized_entropy: 0.884,
    },
    AnchorRow {
        id: "C-2",
        raw: [
            0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 1.00,
        ],
        gen_kl: -2.665,
        kl: 21.275,
        normalized_entropy: 0.000,
    },
];

/// One row renormalized by its displayed sum.
pub fn normalized(row: &AnchorRow) -> StochasticVector {
    let sum: f64 = row.raw.iter().sum();
    StochasticVector::new(row.raw.iter().map(|&v| v / sum).collect())
        .expect("fixture rows are valid after renormalization")
}

/// The fixture as prediction records, in published order.
pub fn records() -> Vec<PredictionRecord> {
    ROWS.iter()
        .map(|row| {
            let prediction = normalized(row);
            let label = prediction.argmax();
            PredictionRecord::new(row.id, label, prediction, None)
                .expect("fixture rows are valid records")
        })
        .collect()
}
