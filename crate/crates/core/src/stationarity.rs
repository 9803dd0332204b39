//! Sufficient condition for strict stationarity.

use serde::{Deserialize, Serialize};

use crate::linalg::{induced_norm, MatrixNorm};
use crate::params::GeneralParams;
use crate::scalar::{to_f64, Scalar};

/// The condition sum under one induced norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityCheck {
    pub norm: MatrixNorm,
    pub sum: f64,
    pub satisfied: bool,
}

/// The condition under all three norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub one: f64,
    pub inf: f64,
    pub two: f64,
    /// Smallest of the three sums.
    pub min_sum: f64,
    /// `1 − min_sum`; positive when the condition holds.
    pub margin: f64,
    pub satisfied: bool,
    pub verdict: String,
}

/// `Σ ‖G0,k‖/(1−|λ_k|) + Σ (‖G1,k‖ + ‖G2,k‖)/(1−γ_k)` under `norm`.
pub fn check_stationarity<T: Scalar>(p: &GeneralParams<T>, norm: MatrixNorm) -> StationarityCheck {
    let mut sum = 0.0;
    for (l, g) in p.lambda.iter().zip(&p.g0) {
        sum += to_f64(induced_norm(g, norm)) / (1.0 - to_f64(*l).abs());
    }
    for k in 0..p.gamma.len() {
        let gs = to_f64(induced_norm(&p.g1[k], norm)) + to_f64(induced_norm(&p.g2[k], norm));
        sum += gs / (1.0 - to_f64(p.gamma[k]).abs());
    }
    StationarityCheck {
        norm,
        sum,
        satisfied: sum < 1.0,
    }
}

pub fn stationarity_report<T: Scalar>(p: &GeneralParams<T>) -> StationarityReport {
    let one = check_stationarity(p, MatrixNorm::One).sum;
    let inf = check_stationarity(p, MatrixNorm::Inf).sum;
    let two = check_stationarity(p, MatrixNorm::Two).sum;
    let min_sum = one.min(inf).min(two);
    let satisfied = min_sum < 1.0;
    StationarityReport {
        one,
        inf,
        two,
        min_sum,
        margin: 1.0 - min_sum,
        satisfied,
        verdict: if satisfied {
            "satisfied".into()
        } else {
            "condition not verified (sufficient only)".into()
        },
    }
}
