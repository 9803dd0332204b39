//! Gaussian quasi-likelihood, its analytic score, and the two estimators.
//!
//! The objective is `L̃_n(θ) = Σ_t ½ (ε_tᵀ R_t⁻¹ ε_t + Σ_i ln h_{ii,t} + ln|R_t|)`.
//! The score follows the chain `∂ln h_t → ∂ε_t → ∂Ψ_{t−1} → ∂R_t → ∂ℓ_t` and is
//! accumulated in the same pass as the value.

mod bfgs;
mod fit;
mod transform;

pub use bfgs::{minimize, BfgsOptions, BfgsOutcome};
pub use fit::{fit, fit_general, fit_lowrank, Estimator, FitOptions, FitReport};
pub use transform::{Transform, TransformKind};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corrfilter::{ensure_pd, DEFAULT_EIG_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, cholesky_inverse, cholesky_solve_in_place};
use crate::params::{GeneralParams, LowRankParams};
use crate::scalar::{lit, to_f64, Scalar};
use crate::volfilter::{DEFAULT_FLOOR, LOG_H_LIMIT};

/// Numerical settings shared by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Floor on `|y|` before taking logs.
    pub floor: f64,
    /// Eigenvalue floor used when `R_t` has to be repaired.
    pub eig_floor: f64,
    /// Objective penalty per repaired `R_t`.
    pub penalty: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            floor: DEFAULT_FLOOR,
            eig_floor: DEFAULT_EIG_FLOOR,
            penalty: 1e3,
        }
    }
}

/// A return panel prepared for repeated evaluation (row-major copies).
#[derive(Debug, Clone)]
pub struct Prepared<T: Scalar> {
    pub n: usize,
    pub m: usize,
    y: Vec<T>,
    ly: Vec<T>,
    pub n_floored: usize,
}

impl<T: Scalar> Prepared<T> {
    pub fn new(panel: &DMatrix<T>, floor: f64) -> Result<Self> {
        let (n, m) = panel.shape();
        let ls = crate::volfilter::log_sq_returns(panel, lit(floor))?;
        let mut y = Vec::with_capacity(n * m);
        let mut ly = Vec::with_capacity(n * m);
        for t in 0..n {
            for i in 0..m {
                y.push(panel[(t, i)]);
                ly.push(ls.values[(t, i)]);
            }
        }
        Ok(Self {
            n,
            m,
            y,
            ly,
            n_floored: ls.n_floored,
        })
    }

    /// `ln y²` (after flooring) of series `i` at time `t`.
    pub fn ly_at(&self, t: usize, i: usize) -> T {
        self.ly[t * self.m + i]
    }
}

/// Parameter point at which to evaluate, in general or factor form.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a, T: Scalar> {
    General(&'a GeneralParams<T>),
    LowRank(&'a LowRankParams<T>),
}

/// What to compute besides the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Want {
    Value,
    Gradient,
    /// Gradient plus the per-observation score rows.
    Scores,
}

#[derive(Debug, Clone)]
pub struct Evaluation<T: Scalar> {
    /// `L̃_n` plus any repair penalty.
    pub value: T,
    /// Gradient of `L̃_n` in pack order of the target.
    pub grad: Option<DVector<T>>,
    /// Row `t` is `∂ℓ̃_t/∂θ`.
    pub scores: Option<DMatrix<T>>,
    pub pd_repairs: usize,
}

fn dim_error(what: &'static str, expected: usize, found: usize) -> Error {
    Error::DimensionMismatch {
        what,
        expected,
        found,
    }
}

fn row_major<T: Scalar>(a: &DMatrix<T>) -> Vec<T> {
    let (r, c) = a.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(a[(i, j)]);
        }
    }
    out
}

#[inline]
fn matvec<T: Scalar>(a: &[T], x: &[T], m: usize, out: &mut [T]) {
    for i in 0..m {
        let row = &a[i * m..(i + 1) * m];
        let mut acc = T::zero();
        for j in 0..m {
            acc += row[j] * x[j];
        }
        out[i] = acc;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Evaluates the objective and optionally its score at `target`.
pub fn evaluate<T: Scalar>(
    target: Target<'_, T>,
    data: &Prepared<T>,
    want: Want,
    settings: &EvalSettings,
) -> Result<Evaluation<T>> {
    let composed;
    let (p, lr) = match target {
        Target::General(p) => (p, None),
        Target::LowRank(lr) => {
            composed = lr.to_general();
            (&composed, Some(lr))
        }
    };
    let o = p.order;
    let (n, m) = (data.n, data.m);
    if m != o.m {
        return Err(dim_error("panel columns", o.m, m));
    }
    let kw = o.k_window;
    if n < kw + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least k_window + 1 = {} observations, got {n}",
            kw + 1
        )));
    }
    let (r, s) = (o.r, o.s);
    let m2 = m * m;
    let lay = o.layout();
    let llay = o.lowrank_layout();
    let (dd, nb) = match lr {
        None => (lay.beta1, o.dim_beta()),
        Some(_) => (llay.beta1, o.dim_beta()),
    };
    let dim = dd + nb;
    let grad_on = want != Want::Value;
    let half: T = lit(0.5);
    let two: T = lit(2.0);
    let (b1, b2) = (p.beta1, p.beta2);
    let w = T::one() - b1 - b2;

    let g0: Vec<Vec<T>> = p.g0.iter().map(row_major).collect();
    let g1: Vec<Vec<T>> = p.g1.iter().map(row_major).collect();
    let g2: Vec<Vec<T>> = p.g2.iter().map(row_major).collect();
    let rbar = row_major(&p.rbar);
    let omega: Vec<T> = p.omega_bar.iter().copied().collect();
    let rot: Vec<(T, T, T, T)> = (0..s)
        .map(|k| {
            let (c, sn) = (p.phi[k].cos(), p.phi[k].sin());
            (c, sn, p.gamma[k] * c, p.gamma[k] * sn)
        })
        .collect();

    // volatility states
    let mut s0 = vec![T::zero(); r * m];
    let mut s1 = vec![T::zero(); r * m];
    let mut cre = vec![T::zero(); s * m];
    let mut cim = vec![T::zero(); s * m];
    let mut c1re = vec![T::zero(); s * m];
    let mut c1im = vec![T::zero(); s * m];

    // residual window: ε, εεᵀ and ∂ln h for every δ direction
    let mut win_eps = vec![T::zero(); kw * m];
    let mut win_pp = vec![T::zero(); kw * m2];
    let mut win_d = vec![T::zero(); if grad_on { kw * dd * m } else { 0 }];
    let pre: Vec<T> = omega.iter().map(|&x| (-x * half).exp()).collect();
    for h in 0..kw {
        win_eps[h * m..(h + 1) * m].copy_from_slice(&pre);
        for i in 0..m {
            for j in 0..m {
                win_pp[h * m2 + i * m + j] = pre[i] * pre[j];
            }
        }
        if grad_on {
            for a in 0..m {
                win_d[h * dd * m + (lay.omega + a) * m + a] = T::one();
            }
        }
    }

    let mut r_prev = rbar.clone();
    let mut r_cur = vec![T::zero(); m2];
    let mut psi = vec![T::zero(); m2];
    let mut sums = vec![T::zero(); m2];
    let mut inv_sd = vec![T::zero(); m];
    let mut chol = vec![T::zero(); m2];
    let mut rinv = vec![T::zero(); m2];
    let mut col = vec![T::zero(); m];
    let mut u = vec![T::zero(); m];
    let mut lh = vec![T::zero(); m];
    let mut eps = vec![T::zero(); m];
    let mut tmp = vec![T::zero(); m];
    let mut tmp2 = vec![T::zero(); m];
    let mut bmat = vec![T::zero(); m2];
    let mut wr = vec![T::zero(); m];
    let mut wi = vec![T::zero(); m];

    let mut rdot = vec![T::zero(); if grad_on { dd * m2 } else { 0 }];
    let mut rdot_b1 = vec![T::zero(); m2];
    let mut rdot_b2 = vec![T::zero(); m2];
    let mut c_rbar = T::one();
    let mut grad = vec![T::zero(); if grad_on { dim } else { 0 }];
    let mut score_row = vec![T::zero(); if grad_on { dim } else { 0 }];
    let mut scores = (want == Want::Scores).then(|| DMatrix::<T>::zeros(n, dim));
    let rbar_pairs = crate::linalg::vech_below_pairs(m);

    let mut total = T::zero();
    let mut repairs = 0usize;
    let mut pos = 0usize;

    for t in 0..n {
        // Ψ_{t−1} from the window
        sums.fill(T::zero());
        for h in 0..kw {
            let pp = &win_pp[h * m2..(h + 1) * m2];
            for (a, b) in sums.iter_mut().zip(pp) {
                *a += *b;
            }
        }
        for i in 0..m {
            let sii = sums[i * m + i];
            if !(sii > T::zero()) {
                return Err(Error::DegenerateColumn(i));
            }
            inv_sd[i] = T::one() / sii.sqrt();
        }
        for i in 0..m {
            for j in 0..m {
                psi[i * m + j] = if i == j {
                    T::one()
                } else {
                    sums[i * m + j] * inv_sd[i] * inv_sd[j]
                };
            }
        }
        for i in 0..m {
            for j in 0..m {
                let idx = i * m + j;
                r_cur[idx] = if i == j {
                    T::one()
                } else {
                    w * rbar[idx] + b1 * psi[idx] + b2 * r_prev[idx]
                };
            }
        }

        if grad_on {
            // ∂Ψ and ∂R for every δ direction
            for l in 0..dd {
                bmat.fill(T::zero());
                for h in 0..kw {
                    let d = &win_d[h * dd * m + l * m..h * dd * m + (l + 1) * m];
                    let pp = &win_pp[h * m2..(h + 1) * m2];
                    for i in 0..m {
                        let di = d[i];
                        if di != T::zero() {
                            let row = &pp[i * m..(i + 1) * m];
                            let br = &mut bmat[i * m..(i + 1) * m];
                            for j in 0..m {
                                br[j] += di * row[j];
                            }
                        }
                    }
                }
                let rd = &mut rdot[l * m2..(l + 1) * m2];
                for i in 0..m {
                    // A_ii / (2 S_ii) with A_ii = −B_ii
                    tmp[i] = -bmat[i * m + i] * inv_sd[i] * inv_sd[i] * half;
                }
                for i in 0..m {
                    for j in 0..i {
                        let a = -(bmat[i * m + j] + bmat[j * m + i]) * half;
                        let dpsi = a * inv_sd[i] * inv_sd[j] - psi[i * m + j] * (tmp[i] + tmp[j]);
                        let v = b1 * dpsi + b2 * rd[i * m + j];
                        rd[i * m + j] = v;
                        rd[j * m + i] = v;
                    }
                }
            }
            for i in 0..m {
                for j in 0..i {
                    let idx = i * m + j;
                    let v1 = psi[idx] - rbar[idx] + b2 * rdot_b1[idx];
                    let v2 = r_prev[idx] - rbar[idx] + b2 * rdot_b2[idx];
                    rdot_b1[idx] = v1;
                    rdot_b1[j * m + i] = v1;
                    rdot_b2[idx] = v2;
                    rdot_b2[j * m + i] = v2;
                }
            }
            c_rbar = w + b2 * c_rbar;
        }

        // ln h_t and ε_t
        lh.copy_from_slice(&omega);
        for k in 0..r {
            matvec(&g0[k], &s0[k * m..(k + 1) * m], m, &mut tmp);
            for i in 0..m {
                lh[i] += tmp[i];
            }
        }
        for k in 0..s {
            matvec(&g1[k], &cre[k * m..(k + 1) * m], m, &mut tmp);
            matvec(&g2[k], &cim[k * m..(k + 1) * m], m, &mut tmp2);
            for i in 0..m {
                lh[i] += tmp[i] + tmp2[i];
            }
        }
        for i in 0..m {
            let v = to_f64(lh[i]);
            if !(v.abs() <= LOG_H_LIMIT) {
                return Err(Error::Overflow { t, value: v });
            }
            eps[i] = data.y[t * m + i] * (-lh[i] * half).exp();
        }

        if grad_on {
            let dslot = &mut win_d[pos * dd * m..(pos + 1) * dd * m];
            dslot.fill(T::zero());
            for a in 0..m {
                dslot[(lay.omega + a) * m + a] = T::one();
            }
            for k in 0..r {
                let sk = &s0[k * m..(k + 1) * m];
                let c = lay.lambda + k;
                matvec(&g0[k], &s1[k * m..(k + 1) * m], m, &mut dslot[c * m..(c + 1) * m]);
                match lr {
                    None => {
                        for j in 0..m {
                            for i in 0..m {
                                dslot[(lay.g0_entry(k, i, j)) * m + i] = sk[j];
                            }
                        }
                    }
                    Some(lr) => {
                        let [fa, fb] = &lr.g0_factors[k];
                        let bs = dot(fb.as_slice(), sk);
                        let (ca, cb) = (llay.g0_factor(k, 0), llay.g0_factor(k, 1));
                        for q in 0..m {
                            dslot[(ca + q) * m + q] = bs;
                            for i in 0..m {
                                dslot[(cb + q) * m + i] = fa[i] * sk[q];
                            }
                        }
                    }
                }
            }
            for k in 0..s {
                let (er, ei, _, _) = rot[k];
                let gm = p.gamma[k];
                for j in 0..m {
                    let (ar, ai) = (c1re[k * m + j], c1im[k * m + j]);
                    wr[j] = er * ar - ei * ai;
                    wi[j] = er * ai + ei * ar;
                }
                let cg = lay.gamma + k;
                matvec(&g1[k], &wr, m, &mut tmp);
                matvec(&g2[k], &wi, m, &mut tmp2);
                for i in 0..m {
                    dslot[cg * m + i] = tmp[i] + tmp2[i];
                }
                let cp = lay.phi + k;
                matvec(&g1[k], &wi, m, &mut tmp);
                matvec(&g2[k], &wr, m, &mut tmp2);
                for i in 0..m {
                    dslot[cp * m + i] = gm * (tmp2[i] - tmp[i]);
                }
                let re = &cre[k * m..(k + 1) * m];
                let im = &cim[k * m..(k + 1) * m];
                match lr {
                    None => {
                        for j in 0..m {
                            for i in 0..m {
                                dslot[(lay.g1_entry(k, i, j)) * m + i] = re[j];
                                dslot[(lay.g2_entry(k, i, j)) * m + i] = im[j];
                            }
                        }
                    }
                    Some(lr) => {
                        let blocks = [
                            (&lr.g1_factors[k], re, 0usize),
                            (&lr.g2_factors[k], im, 1usize),
                        ];
                        for (q, x, which) in blocks {
                            let off = |f: usize| {
                                if which == 0 {
                                    llay.g1_factor(k, f)
                                } else {
                                    llay.g2_factor(k, f)
                                }
                            };
                            for pair in 0..2 {
                                let (left, right) = (&q[2 * pair], &q[2 * pair + 1]);
                                let rx = dot(right.as_slice(), x);
                                let (cl, cr) = (off(2 * pair), off(2 * pair + 1));
                                for a in 0..m {
                                    dslot[(cl + a) * m + a] = rx;
                                    for i in 0..m {
                                        dslot[(cr + a) * m + i] = left[i] * x[a];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        // Cholesky of R_t, repairing if necessary
        chol.copy_from_slice(&r_cur);
        if !cholesky_in_place(&mut chol, m) {
            repairs += 1;
            let rm = DMatrix::from_row_slice(m, m, &r_cur);
            let (fixed, _) = ensure_pd(&rm, lit(settings.eig_floor));
            r_cur = row_major(&fixed);
            chol.copy_from_slice(&r_cur);
            if !cholesky_in_place(&mut chol, m) {
                return Err(Error::NonFinite { t });
            }
        }
        let mut logdet = T::zero();
        for i in 0..m {
            logdet += chol[i * m + i].ln();
        }
        logdet *= two;
        u.copy_from_slice(&eps);
        cholesky_solve_in_place(&chol, m, &mut u);
        let mut sum_lh = T::zero();
        for &x in &lh {
            sum_lh += x;
        }
        let lt = half * (sum_lh + logdet + dot(&eps, &u));
        if !lt.is_finite() {
            return Err(Error::NonFinite { t });
        }
        total += lt;

        if grad_on {
            cholesky_inverse(&chol, m, &mut rinv, &mut col);
            // M = R⁻¹ − u uᵀ, stored in rinv
            for i in 0..m {
                for j in 0..m {
                    rinv[i * m + j] -= u[i] * u[j];
                }
                tmp[i] = half * (T::one() - eps[i] * u[i]);
            }
            let dslot = &win_d[pos * dd * m..(pos + 1) * dd * m];
            for l in 0..dd {
                let d = &dslot[l * m..(l + 1) * m];
                let rd = &rdot[l * m2..(l + 1) * m2];
                let mut g = dot(d, &tmp);
                for i in 0..m {
                    for j in 0..i {
                        g += rinv[i * m + j] * rd[i * m + j];
                    }
                }
                score_row[l] = g;
            }
            let mut gb1 = T::zero();
            let mut gb2 = T::zero();
            for i in 0..m {
                for j in 0..i {
                    gb1 += rinv[i * m + j] * rdot_b1[i * m + j];
                    gb2 += rinv[i * m + j] * rdot_b2[i * m + j];
                }
            }
            score_row[dd] = gb1;
            score_row[dd + 1] = gb2;
            for (e, &(i, j)) in rbar_pairs.iter().enumerate() {
                score_row[dd + 2 + e] = c_rbar * rinv[i * m + j];
            }
            for (g, &v) in grad.iter_mut().zip(&score_row) {
                *g += v;
            }
            if let Some(sc) = scores.as_mut() {
                for (c, &v) in score_row.iter().enumerate() {
                    sc[(t, c)] = v;
                }
            }
        }

        // advance volatility states with ln y²_t
        let ly = &data.ly[t * m..(t + 1) * m];
        for k in 0..r {
            let l = p.lambda[k];
            for j in 0..m {
                let idx = k * m + j;
                s1[idx] = s0[idx] + l * s1[idx];
                s0[idx] = ly[j] + l * s0[idx];
            }
        }
        for k in 0..s {
            let (_, _, zr, zi) = rot[k];
            for j in 0..m {
                let idx = k * m + j;
                let (ar, ai) = (c1re[idx], c1im[idx]);
                c1re[idx] = cre[idx] + zr * ar - zi * ai;
                c1im[idx] = cim[idx] + zr * ai + zi * ar;
                let (cr, ci) = (cre[idx], cim[idx]);
                cre[idx] = ly[j] + zr * cr - zi * ci;
                cim[idx] = zr * ci + zi * cr;
            }
        }

        // push ε_t into the window
        win_eps[pos * m..(pos + 1) * m].copy_from_slice(&eps);
        for i in 0..m {
            for j in 0..m {
                win_pp[pos * m2 + i * m + j] = eps[i] * eps[j];
            }
        }
        pos = (pos + 1) % kw;
        std::mem::swap(&mut r_prev, &mut r_cur);
    }

    let value = total + lit::<T>(settings.penalty) * lit::<T>(repairs as f64);
    Ok(Evaluation {
        value,
        grad: grad_on.then(|| DVector::from_vec(grad)),
        scores,
        pd_repairs: repairs,
    })
}

fn check_panel<T: Scalar>(p: &GeneralParams<T>, panel: &DMatrix<T>) -> Result<()> {
    p.validate()?;
    if panel.ncols() != p.order.m {
        return Err(dim_error("panel columns", p.order.m, panel.ncols()));
    }
    Ok(())
}

/// `L̃_n(θ)`, the negative Gaussian quasi-log-likelihood.
pub fn neg_loglik<T: Scalar>(p: &GeneralParams<T>, panel: &DMatrix<T>) -> Result<T> {
    check_panel(p, panel)?;
    let s = EvalSettings::default();
    let data = Prepared::new(panel, s.floor)?;
    Ok(evaluate(Target::General(p), &data, Want::Value, &s)?.value)
}

/// Analytic gradient of `L̃_n` in pack order.
pub fn grad_neg_loglik<T: Scalar>(p: &GeneralParams<T>, panel: &DMatrix<T>) -> Result<DVector<T>> {
    check_panel(p, panel)?;
    let s = EvalSettings::default();
    let data = Prepared::new(panel, s.floor)?;
    Ok(evaluate(Target::General(p), &data, Want::Gradient, &s)?
        .grad
        .expect("gradient requested"))
}

/// Per-observation scores `∂ℓ̃_t/∂θ`, one row per observation.
pub fn scores<T: Scalar>(p: &GeneralParams<T>, panel: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_panel(p, panel)?;
    let s = EvalSettings::default();
    let data = Prepared::new(panel, s.floor)?;
    Ok(evaluate(Target::General(p), &data, Want::Scores, &s)?
        .scores
        .expect("scores requested"))
}

/// `L̃_n(θ(ϑ))`.
pub fn neg_loglik_lowrank<T: Scalar>(lr: &LowRankParams<T>, panel: &DMatrix<T>) -> Result<T> {
    lr.validate()?;
    let s = EvalSettings::default();
    let data = Prepared::new(panel, s.floor)?;
    Ok(evaluate(Target::LowRank(lr), &data, Want::Value, &s)?.value)
}

/// Gradient of `L̃_n(θ(ϑ))` with respect to ϑ.
pub fn grad_neg_loglik_lowrank<T: Scalar>(
    lr: &LowRankParams<T>,
    panel: &DMatrix<T>,
) -> Result<DVector<T>> {
    lr.validate()?;
    let s = EvalSettings::default();
    let data = Prepared::new(panel, s.floor)?;
    Ok(evaluate(Target::LowRank(lr), &data, Want::Gradient, &s)?
        .grad
        .expect("gradient requested"))
}
