//! Rolling uncentered correlation Ψ and the `R_t` recursion.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::params::GeneralParams;
use crate::scalar::{lit, Scalar};

/// Default eigenvalue floor for [`ensure_pd`].
pub const DEFAULT_EIG_FLOOR: f64 = 1e-6;

/// Uncentered sample correlation of the residual vectors in `window`.
pub fn sample_corr<T: Scalar>(window: &[DVector<T>]) -> Result<DMatrix<T>> {
    let m = window.first().map_or(0, |v| v.len());
    let mut s = DMatrix::<T>::zeros(m, m);
    for e in window {
        if e.len() != m {
            return Err(Error::DimensionMismatch {
                what: "window vector",
                expected: m,
                found: e.len(),
            });
        }
        s.ger(T::one(), e, e, T::one());
    }
    corr_from_cross_products(&s)
}

pub(crate) fn corr_from_cross_products<T: Scalar>(s: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = s.nrows();
    let mut sd = Vec::with_capacity(m);
    for i in 0..m {
        if !(s[(i, i)] > T::zero()) {
            return Err(Error::DegenerateColumn(i));
        }
        sd.push(s[(i, i)].sqrt());
    }
    let mut psi = DMatrix::identity(m, m);
    for j in 0..m {
        for i in j + 1..m {
            let v = s[(i, j)] / (sd[i] * sd[j]);
            let v = v.clamp(-T::one(), T::one());
            psi[(i, j)] = v;
            psi[(j, i)] = v;
        }
    }
    Ok(psi)
}

/// `R_t = (1 − β₁ − β₂) R̄ + β₁ Ψ_{t−1} + β₂ R_{t−1}`.
pub fn step_r<T: Scalar>(
    r_prev: &DMatrix<T>,
    psi: &DMatrix<T>,
    beta1: T,
    beta2: T,
    rbar: &DMatrix<T>,
) -> DMatrix<T> {
    let w = T::one() - beta1 - beta2;
    let m = rbar.nrows();
    let mut out = DMatrix::identity(m, m);
    for j in 0..m {
        for i in j + 1..m {
            let v = w * rbar[(i, j)] + beta1 * psi[(i, j)] + beta2 * r_prev[(i, j)];
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Clips eigenvalues at `eig_floor` and rescales to unit diagonal when needed.
///
/// Returns the input unchanged and `false` if it is already above the floor.
pub fn ensure_pd<T: Scalar>(r: &DMatrix<T>, eig_floor: T) -> (DMatrix<T>, bool) {
    let eig = SymmetricEigen::new(r.clone());
    if eig.eigenvalues.iter().all(|&v| v >= eig_floor) {
        return (r.clone(), false);
    }
    let clipped = eig.eigenvalues.map(|v| if v < eig_floor { eig_floor } else { v });
    let q = &eig.eigenvectors;
    let full = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    let m = r.nrows();
    let d: Vec<T> = (0..m).map(|i| full[(i, i)].sqrt()).collect();
    let mut out = DMatrix::identity(m, m);
    for j in 0..m {
        for i in j + 1..m {
            let v = full[(i, j)] / (d[i] * d[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    (out, true)
}

/// Residual window and previous correlation matrix.
#[derive(Debug, Clone)]
pub struct CorrState<T: Scalar> {
    pub window: VecDeque<DVector<T>>,
    pub r_prev: DMatrix<T>,
    k_window: usize,
}

impl<T: Scalar> CorrState<T> {
    /// Pre-sample state: `R_0 = R̄` and a window of `exp(−ω̄/2)` residuals.
    pub fn new(p: &GeneralParams<T>) -> Self {
        let half: T = lit(0.5);
        let pre = p.omega_bar.map(|w| (-w * half).exp());
        let k = p.order.k_window;
        Self {
            window: std::iter::repeat(pre).take(k).collect(),
            r_prev: p.rbar.clone(),
            k_window: k,
        }
    }

    /// `Ψ_{t−1}` from the current window.
    pub fn psi(&self) -> Result<DMatrix<T>> {
        let (a, b) = self.window.as_slices();
        if b.is_empty() {
            sample_corr(a)
        } else {
            sample_corr(&self.window.iter().cloned().collect::<Vec<_>>())
        }
    }

    /// Computes `R_t`, stores it as the new previous value and returns it.
    pub fn step(&mut self, p: &GeneralParams<T>) -> Result<DMatrix<T>> {
        let psi = self.psi()?;
        let r = step_r(&self.r_prev, &psi, p.beta1, p.beta2, &p.rbar);
        self.r_prev = r.clone();
        Ok(r)
    }

    /// Appends `ε_t`, dropping the oldest residual.
    pub fn push(&mut self, eps: DVector<T>) {
        self.window.push_back(eps);
        while self.window.len() > self.k_window {
            self.window.pop_front();
        }
    }
}

/// Correlation path `R_1 … R_{n+1}` for residuals `ε_1 … ε_n`.
#[derive(Debug, Clone)]
pub struct CorrPath<T: Scalar> {
    /// `r[t]` is `R_{t+1}`; the last entry is the one-step-ahead forecast.
    pub r: Vec<DMatrix<T>>,
    pub pd_repairs: usize,
}

/// Runs the correlation recursion over residual rows, repairing non-PD steps.
pub fn run_corr_filter<T: Scalar>(
    p: &GeneralParams<T>,
    eps: &DMatrix<T>,
    eig_floor: T,
) -> Result<CorrPath<T>> {
    if eps.ncols() != p.order.m {
        return Err(Error::DimensionMismatch {
            what: "residual columns",
            expected: p.order.m,
            found: eps.ncols(),
        });
    }
    let mut st = CorrState::new(p);
    let mut r = Vec::with_capacity(eps.nrows() + 1);
    let mut pd_repairs = 0;
    for t in 0..=eps.nrows() {
        let rt = st.step(p)?;
        let rt = if rt.clone().cholesky().is_none() {
            let (fixed, _) = ensure_pd(&rt, eig_floor);
            pd_repairs += 1;
            fixed
        } else {
            rt
        };
        r.push(rt);
        if t < eps.nrows() {
            st.push(eps.row(t).transpose());
        }
    }
    Ok(CorrPath { r, pd_repairs })
}
