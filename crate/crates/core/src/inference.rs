//! Sandwich covariance estimates and spillover z-tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::likelihood::{evaluate, EvalSettings, Estimator, FitReport, Prepared, Target, Want};
use crate::linalg::{min_eigenvalue, pinv, symmetrize};
use crate::params::{GeneralParams, ModelOrder};
use crate::scalar::{count, lit, to_f64, Scalar};

/// Step of the central differences used for Σ̂*.
pub const HESSIAN_STEP: f64 = 1e-5;
/// Relative singular-value cutoff of the generalized inverse in low-rank mode.
pub const PINV_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of Σ̂* in general mode.
pub const MIN_INFO_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    General,
    LowRank,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CovOptions {
    /// Report Σ̂*⁻¹ (valid under Gaussian innovations) instead of the sandwich.
    pub gaussian: bool,
    pub settings: EvalSettings,
}

/// Covariance estimates, all in general θ coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CovReport<T: Scalar> {
    pub sigma_hat: DMatrix<T>,
    pub sigma_star_hat: DMatrix<T>,
    /// Asymptotic covariance of θ̂; standard errors are `sqrt(avar_ii / n)`.
    pub avar: DMatrix<T>,
    pub mode: CovMode,
    pub gaussian: bool,
    pub n_obs: usize,
    pub order: ModelOrder,
}

impl<T: Scalar> CovReport<T> {
    pub fn std_errors(&self) -> DVector<T> {
        let n = count::<T>(self.n_obs);
        DVector::from_fn(self.avar.nrows(), |i, _| (self.avar[(i, i)].max(T::zero()) / n).sqrt())
    }
}

fn prepared<T: Scalar>(p: &GeneralParams<T>, panel: &DMatrix<T>, s: &EvalSettings) -> Result<Prepared<T>> {
    if panel.ncols() != p.order.m {
        return Err(Error::DimensionMismatch {
            what: "panel columns",
            expected: p.order.m,
            found: panel.ncols(),
        });
    }
    Prepared::new(panel, s.floor)
}

fn sigma_from_scores<T: Scalar>(scores: &DMatrix<T>) -> DMatrix<T> {
    let n = count::<T>(scores.nrows());
    symmetrize(&((scores.transpose() * scores) / n))
}

fn sigma_star_on<T: Scalar>(
    p: &GeneralParams<T>,
    data: &Prepared<T>,
    s: &EvalSettings,
) -> Result<DMatrix<T>> {
    let theta = p.pack();
    let d = theta.len();
    let h: T = lit(HESSIAN_STEP);
    let n = count::<T>(data.n);
    let grad_at = |v: &DVector<T>| -> Result<DVector<T>> {
        let q = GeneralParams::unpack_unchecked(v.as_slice(), p.order)?;
        let ev = evaluate(Target::General(&q), data, Want::Gradient, s)?;
        Ok(ev.grad.expect("gradient requested"))
    };
    let mut hess = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[c] += h;
        dn[c] -= h;
        let col = (grad_at(&up)? - grad_at(&dn)?) / (h + h) / n;
        hess.set_column(c, &col);
    }
    Ok(symmetrize(&hess))
}

/// Σ̂ = (1/n) Σ_t g_t g_tᵀ from the analytic per-observation scores.
pub fn estimate_sigma<T: Scalar>(p: &GeneralParams<T>, panel: &DMatrix<T>) -> Result<DMatrix<T>> {
    let s = EvalSettings::default();
    let data = prepared(p, panel, &s)?;
    let ev = evaluate(Target::General(p), &data, Want::Scores, &s)?;
    Ok(sigma_from_scores(&ev.scores.expect("scores requested")))
}

/// Σ̂*: central differences of the analytic gradient divided by n, symmetrized.
pub fn estimate_sigma_star<T: Scalar>(p: &GeneralParams<T>, panel: &DMatrix<T>) -> Result<DMatrix<T>> {
    let s = EvalSettings::default();
    let data = prepared(p, panel, &s)?;
    sigma_star_on(p, &data, &s)
}

/// `Σ*⁻¹ Σ Σ*⁻¹`, or `Σ*⁻¹` when `gaussian`.
pub fn general_avar<T: Scalar>(
    sigma: &DMatrix<T>,
    sigma_star: &DMatrix<T>,
    gaussian: bool,
) -> Result<DMatrix<T>> {
    let min_eig = to_f64(min_eigenvalue(sigma_star));
    if !(min_eig >= MIN_INFO_EIGENVALUE) {
        return Err(Error::SingularInformation {
            min_eigenvalue: min_eig,
        });
    }
    let inv = sigma_star
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| sigma_star.clone().try_inverse())
        .ok_or(Error::SingularInformation {
            min_eigenvalue: min_eig,
        })?;
    let inv = symmetrize(&inv);
    if gaussian {
        return Ok(inv);
    }
    Ok(symmetrize(&(&inv * sigma * &inv)))
}

/// `P Σ_G Pᵀ` with `P = Δ (Δᵀ Σ* Δ)^g Δᵀ Σ*`, evaluated as `Δ W Δᵀ Σ Δ W Δᵀ`
/// so that Σ* itself is never inverted.
pub fn lowrank_avar<T: Scalar>(
    sigma: &DMatrix<T>,
    sigma_star: &DMatrix<T>,
    delta: &DMatrix<T>,
    gaussian: bool,
) -> DMatrix<T> {
    let w = pinv(&symmetrize(&(delta.transpose() * sigma_star * delta)), lit(PINV_TOL));
    let dw = delta * &w;
    if gaussian {
        return symmetrize(&(&dw * delta.transpose()));
    }
    let inner = delta.transpose() * sigma * delta;
    symmetrize(&(&dw * inner * dw.transpose()))
}

/// The projection `P_ϑ = Δ (Δᵀ Σ* Δ)^g Δᵀ Σ*`.
pub fn projection<T: Scalar>(sigma_star: &DMatrix<T>, delta: &DMatrix<T>) -> DMatrix<T> {
    let w = pinv(&symmetrize(&(delta.transpose() * sigma_star * delta)), lit(PINV_TOL));
    delta * w * delta.transpose() * sigma_star
}

/// Asymptotic covariance of a fitted model.
pub fn asymptotic_cov<T: Scalar>(fit: &FitReport<T>, panel: &DMatrix<T>) -> Result<CovReport<T>> {
    asymptotic_cov_with(fit, panel, &CovOptions::default())
}

pub fn asymptotic_cov_with<T: Scalar>(
    fit: &FitReport<T>,
    panel: &DMatrix<T>,
    opts: &CovOptions,
) -> Result<CovReport<T>> {
    let p = &fit.params;
    let s = &opts.settings;
    let data = prepared(p, panel, s)?;
    let ev = evaluate(Target::General(p), &data, Want::Scores, s)?;
    let sigma = sigma_from_scores(&ev.scores.expect("scores requested"));
    let sigma_star = sigma_star_on(p, &data, s)?;
    let (avar, mode) = match (fit.estimator, &fit.lowrank) {
        (Estimator::LowRank, Some(lr)) => (
            lowrank_avar(&sigma, &sigma_star, &lr.jacobian(), opts.gaussian),
            CovMode::LowRank,
        ),
        _ => (general_avar(&sigma, &sigma_star, opts.gaussian)?, CovMode::General),
    };
    Ok(CovReport {
        sigma_hat: sigma,
        sigma_star_hat: sigma_star,
        avar,
        mode,
        gaussian: opts.gaussian,
        n_obs: data.n,
        order: p.order,
    })
}

/// The selector `c_ij` with `c_ijᵀ θ = Φ1[i, j]` (`i`, `j` one-based).
pub fn spillover_vector<T: Scalar>(order: ModelOrder, i: usize, j: usize) -> Result<DVector<T>> {
    let m = order.m;
    if i == 0 || j == 0 || i > m || j > m {
        return Err(Error::IndexOutOfRange(format!(
            "({i}, {j}) outside 1..={m}"
        )));
    }
    let l = order.layout();
    let mut c = DVector::zeros(l.len);
    for k in 0..order.r {
        c[l.g0_entry(k, i - 1, j - 1)] = T::one();
    }
    for k in 0..order.s {
        c[l.g1_entry(k, i - 1, j - 1)] = T::one();
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpilloverTest {
    /// One-based row index.
    pub i: usize,
    /// One-based column index.
    pub j: usize,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

/// Two-sided normal p-value of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * n.sf(z.abs())).min(1.0)
}

/// z-test of `Φ1[i, j] = 0` for an off-diagonal pair (`i`, `j` one-based).
pub fn spillover_test<T: Scalar>(
    theta: &GeneralParams<T>,
    cov: &CovReport<T>,
    i: usize,
    j: usize,
) -> Result<SpilloverTest> {
    if i == j {
        return Err(Error::IndexOutOfRange(format!(
            "spillover needs an off-diagonal pair, got ({i}, {j})"
        )));
    }
    let c = spillover_vector::<T>(theta.order, i, j)?;
    if cov.avar.nrows() != c.len() {
        return Err(Error::DimensionMismatch {
            what: "covariance rows",
            expected: c.len(),
            found: cov.avar.nrows(),
        });
    }
    let estimate = to_f64(c.dot(&theta.pack()));
    let var = to_f64((c.transpose() * &cov.avar * &c)[(0, 0)]);
    let se = (var.max(0.0) / cov.n_obs as f64).sqrt();
    let z = estimate / se;
    Ok(SpilloverTest {
        i,
        j,
        estimate,
        se,
        z,
        p: two_sided_p(z),
    })
}

/// Tests for every off-diagonal pair, row-major.
pub fn spillover_matrix<T: Scalar>(theta: &GeneralParams<T>, cov: &CovReport<T>) -> Result<Vec<SpilloverTest>> {
    let m = theta.order.m;
    let mut out = Vec::with_capacity(m * (m - 1));
    for i in 1..=m {
        for j in 1..=m {
            if i != j {
                out.push(spillover_test(theta, cov, i, j)?);
            }
        }
    }
    Ok(out)
}
