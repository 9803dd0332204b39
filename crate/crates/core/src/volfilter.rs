//! Log-volatility filter.
//!
//! `ln h_t = ω̄ + Σ_{i≥1} Φ_i ln y²_{t−i}` is realized exactly through one state
//! vector per eigenvalue term, so each step costs `O(m²(r + 2s))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::GeneralParams;
use crate::scalar::{lit, to_f64, Scalar};

/// Bound on `|ln h|` beyond which a path is treated as explosive.
pub const LOG_H_LIMIT: f64 = 700.0;

/// Default floor on `|y|` before taking logs.
pub const DEFAULT_FLOOR: f64 = 1e-8;

/// `Φ_i` for `i ≥ 1`.
pub fn phi_matrix<T: Scalar>(p: &GeneralParams<T>, i: usize) -> DMatrix<T> {
    assert!(i >= 1, "phi_matrix lag starts at 1");
    let m = p.order.m;
    let e: T = lit((i - 1) as f64);
    let mut out = DMatrix::zeros(m, m);
    for (l, g) in p.lambda.iter().zip(&p.g0) {
        out += g * l.powi((i - 1) as i32);
    }
    for k in 0..p.order.s {
        let w = p.gamma[k].powi((i - 1) as i32);
        let ang = p.phi[k] * e;
        out += &p.g1[k] * (w * ang.cos()) + &p.g2[k] * (w * ang.sin());
    }
    out
}

/// `ln y²` with a floor on `|y|`, plus the number of floored cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSquares<T: Scalar> {
    pub values: DMatrix<T>,
    pub n_floored: usize,
}

pub fn log_sq_returns<T: Scalar>(panel: &DMatrix<T>, floor: T) -> Result<LogSquares<T>> {
    if !(floor > T::zero()) {
        return Err(Error::InvalidArgument("log-square floor must be positive".into()));
    }
    let f2 = floor * floor;
    let mut n_floored = 0;
    let mut values = DMatrix::zeros(panel.nrows(), panel.ncols());
    for c in 0..panel.ncols() {
        for r in 0..panel.nrows() {
            let y = panel[(r, c)];
            if !y.is_finite() {
                return Err(Error::NonFiniteInput { row: r, col: c });
            }
            let y2 = y * y;
            values[(r, c)] = if y2 < f2 {
                n_floored += 1;
                f2.ln()
            } else {
                y2.ln()
            };
        }
    }
    Ok(LogSquares { values, n_floored })
}

/// Per-term accumulators: `s_k` for real terms, `(a_k, b_k)` for complex pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct VolFilterState<T: Scalar> {
    pub s: Vec<DVector<T>>,
    pub a: Vec<DVector<T>>,
    pub b: Vec<DVector<T>>,
}

impl<T: Scalar> VolFilterState<T> {
    /// Zero state, i.e. an all-ones pre-sample history.
    pub fn new(m: usize, r: usize, s: usize) -> Self {
        Self {
            s: vec![DVector::zeros(m); r],
            a: vec![DVector::zeros(m); s],
            b: vec![DVector::zeros(m); s],
        }
    }

    pub fn for_params(p: &GeneralParams<T>) -> Self {
        Self::new(p.order.m, p.order.r, p.order.s)
    }

    /// Current `ln h_t`.
    pub fn log_h(&self, p: &GeneralParams<T>) -> DVector<T> {
        let mut out = p.omega_bar.clone();
        for (g, s) in p.g0.iter().zip(&self.s) {
            out.gemv(T::one(), g, s, T::one());
        }
        for k in 0..self.a.len() {
            out.gemv(T::one(), &p.g1[k], &self.a[k], T::one());
            out.gemv(T::one(), &p.g2[k], &self.b[k], T::one());
        }
        out
    }

    /// Moves the state from `t` to `t+1` given `ln y²_t`.
    pub fn advance(&mut self, p: &GeneralParams<T>, ly: &DVector<T>) {
        for (s, &l) in self.s.iter_mut().zip(&p.lambda) {
            *s *= l;
            *s += ly;
        }
        for k in 0..self.a.len() {
            let (g, ph) = (p.gamma[k], p.phi[k]);
            let (c, sn) = (g * ph.cos(), g * ph.sin());
            let a_new = self.a[k].map(|x| x * c) - self.b[k].map(|x| x * sn) + ly;
            let b_new = self.a[k].map(|x| x * sn) + self.b[k].map(|x| x * c);
            self.a[k] = a_new;
            self.b[k] = b_new;
        }
    }
}

/// Filtered log-variances and devolatilized residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct VolPath<T: Scalar> {
    /// Row `t` holds `ln h_t`.
    pub log_h: DMatrix<T>,
    /// Row `t` holds `ε_t = y_t ⊘ h_t^{1/2}`.
    pub eps: DMatrix<T>,
    /// One-step-ahead `ln h_{n+1}`, known after the last observation.
    pub next_log_h: DVector<T>,
}

fn check_dims<T: Scalar>(p: &GeneralParams<T>, a: &DMatrix<T>, what: &'static str) -> Result<()> {
    if a.ncols() != p.order.m {
        return Err(Error::DimensionMismatch {
            what,
            expected: p.order.m,
            found: a.ncols(),
        });
    }
    Ok(())
}

fn check_log_h<T: Scalar>(t: usize, lh: &DVector<T>) -> Result<()> {
    for &x in lh.iter() {
        let v = to_f64(x);
        if !(v.abs() <= LOG_H_LIMIT) {
            return Err(Error::Overflow { t, value: v });
        }
    }
    Ok(())
}

pub fn run_filter<T: Scalar>(
    p: &GeneralParams<T>,
    log_sq: &DMatrix<T>,
    panel: &DMatrix<T>,
) -> Result<VolPath<T>> {
    check_dims(p, log_sq, "log-square columns")?;
    check_dims(p, panel, "panel columns")?;
    if log_sq.nrows() != panel.nrows() {
        return Err(Error::DimensionMismatch {
            what: "log-square rows",
            expected: panel.nrows(),
            found: log_sq.nrows(),
        });
    }
    let (n, m) = (panel.nrows(), p.order.m);
    let half: T = lit(0.5);
    let mut state = VolFilterState::for_params(p);
    let mut log_h = DMatrix::zeros(n, m);
    let mut eps = DMatrix::zeros(n, m);
    for t in 0..n {
        let lh = state.log_h(p);
        check_log_h(t, &lh)?;
        for i in 0..m {
            log_h[(t, i)] = lh[i];
            eps[(t, i)] = panel[(t, i)] / (lh[i] * half).exp();
        }
        state.advance(p, &log_sq.row(t).transpose());
    }
    let next_log_h = state.log_h(p);
    check_log_h(n, &next_log_h)?;
    Ok(VolPath {
        log_h,
        eps,
        next_log_h,
    })
}

/// `ln h_t` derivatives with respect to the volatility block δ.
///
/// `first[t]` is `m × dim_delta` with columns in pack order. When requested,
/// `second[t][i]` is the `dim_delta × dim_delta` Hessian of `ln h_{i,t}`.
#[derive(Debug, Clone)]
pub struct VolDerivatives<T: Scalar> {
    pub first: Vec<DMatrix<T>>,
    pub second: Option<Vec<Vec<DMatrix<T>>>>,
}

/// Accumulators of a complex term in `c = a + ib` form, with the first and
/// second derivatives of `c` with respect to `z = γ e^{iφ}`.
#[derive(Clone)]
struct ComplexAcc<T: Scalar> {
    re: DVector<T>,
    im: DVector<T>,
    d1re: DVector<T>,
    d1im: DVector<T>,
    d2re: DVector<T>,
    d2im: DVector<T>,
}

fn cmul<T: Scalar>(ar: T, ai: T, br: T, bi: T) -> (T, T) {
    (ar * br - ai * bi, ar * bi + ai * br)
}

pub fn derivative_states<T: Scalar>(
    p: &GeneralParams<T>,
    log_sq: &DMatrix<T>,
    with_second: bool,
) -> Result<VolDerivatives<T>> {
    check_dims(p, log_sq, "log-square columns")?;
    let o = p.order;
    let (n, m) = (log_sq.nrows(), o.m);
    let lay = o.layout();
    let dd = o.dim_delta();
    let two: T = lit(2.0);

    // real terms: s, s' = ∂s/∂λ, s'' = ∂²s/∂λ²
    let mut s0 = vec![DVector::<T>::zeros(m); o.r];
    let mut s1 = s0.clone();
    let mut s2 = s0.clone();
    let zero = DVector::<T>::zeros(m);
    let mut cs = vec![
        ComplexAcc {
            re: zero.clone(),
            im: zero.clone(),
            d1re: zero.clone(),
            d1im: zero.clone(),
            d2re: zero.clone(),
            d2im: zero.clone(),
        };
        o.s
    ];

    let mut first = Vec::with_capacity(n);
    let mut second = with_second.then(|| Vec::with_capacity(n));
    for t in 0..n {
        let mut d = DMatrix::zeros(m, dd);
        for i in 0..m {
            d[(i, lay.omega + i)] = T::one();
        }
        let mut h2 = with_second.then(|| vec![DMatrix::<T>::zeros(dd, dd); m]);
        for k in 0..o.r {
            let g = &p.g0[k];
            let col = g * &s1[k];
            d.column_mut(lay.lambda + k).copy_from(&col);
            for j in 0..m {
                for i in 0..m {
                    d[(i, lay.g0_entry(k, i, j))] = s0[k][j];
                }
            }
            if let Some(h2) = h2.as_mut() {
                let ll = g * &s2[k];
                let li = lay.lambda + k;
                for i in 0..m {
                    h2[i][(li, li)] = ll[i];
                    for j in 0..m {
                        let gi = lay.g0_entry(k, i, j);
                        h2[i][(li, gi)] = s1[k][j];
                        h2[i][(gi, li)] = s1[k][j];
                    }
                }
            }
        }
        for k in 0..o.s {
            let acc = &cs[k];
            let (gm, ph) = (p.gamma[k], p.phi[k]);
            let (er, ei) = (ph.cos(), ph.sin());
            let (zr, zi) = (gm * er, gm * ei);
            // ∂c/∂γ = e^{iφ} c',  ∂c/∂φ = i z c'
            let mut dg = (zero.clone(), zero.clone());
            let mut dp = (zero.clone(), zero.clone());
            for j in 0..m {
                let (wr, wi) = cmul(er, ei, acc.d1re[j], acc.d1im[j]);
                dg.0[j] = wr;
                dg.1[j] = wi;
                dp.0[j] = -gm * wi;
                dp.1[j] = gm * wr;
            }
            let (g1, g2) = (&p.g1[k], &p.g2[k]);
            let colg = g1 * &dg.0 + g2 * &dg.1;
            let colp = g1 * &dp.0 + g2 * &dp.1;
            d.column_mut(lay.gamma + k).copy_from(&colg);
            d.column_mut(lay.phi + k).copy_from(&colp);
            for j in 0..m {
                for i in 0..m {
                    d[(i, lay.g1_entry(k, i, j))] = acc.re[j];
                    d[(i, lay.g2_entry(k, i, j))] = acc.im[j];
                }
            }
            if let Some(h2) = h2.as_mut() {
                // ∂²c/∂γ² = e^{2iφ} c'', ∂²c/∂γ∂φ = i e^{iφ}(c' + z c''), ∂²c/∂φ² = −z c' − z² c''
                let (e2r, e2i) = cmul(er, ei, er, ei);
                let (z2r, z2i) = cmul(zr, zi, zr, zi);
                let mut gg = (zero.clone(), zero.clone());
                let mut gp = (zero.clone(), zero.clone());
                let mut pp = (zero.clone(), zero.clone());
                for j in 0..m {
                    let (c1r, c1i, c2r, c2i) = (acc.d1re[j], acc.d1im[j], acc.d2re[j], acc.d2im[j]);
                    let v = cmul(e2r, e2i, c2r, c2i);
                    gg.0[j] = v.0;
                    gg.1[j] = v.1;
                    let zc2 = cmul(zr, zi, c2r, c2i);
                    let inner = cmul(er, ei, c1r + zc2.0, c1i + zc2.1);
                    gp.0[j] = -inner.1;
                    gp.1[j] = inner.0;
                    let a = cmul(zr, zi, c1r, c1i);
                    let b = cmul(z2r, z2i, c2r, c2i);
                    pp.0[j] = -a.0 - b.0;
                    pp.1[j] = -a.1 - b.1;
                }
                let vgg = g1 * &gg.0 + g2 * &gg.1;
                let vgp = g1 * &gp.0 + g2 * &gp.1;
                let vpp = g1 * &pp.0 + g2 * &pp.1;
                let (gi_, pi_) = (lay.gamma + k, lay.phi + k);
                for i in 0..m {
                    h2[i][(gi_, gi_)] = vgg[i];
                    h2[i][(gi_, pi_)] = vgp[i];
                    h2[i][(pi_, gi_)] = vgp[i];
                    h2[i][(pi_, pi_)] = vpp[i];
                    for j in 0..m {
                        let a1 = lay.g1_entry(k, i, j);
                        let a2 = lay.g2_entry(k, i, j);
                        for (x, v) in [(a1, dg.0[j]), (a2, dg.1[j])] {
                            h2[i][(gi_, x)] = v;
                            h2[i][(x, gi_)] = v;
                        }
                        for (x, v) in [(a1, dp.0[j]), (a2, dp.1[j])] {
                            h2[i][(pi_, x)] = v;
                            h2[i][(x, pi_)] = v;
                        }
                    }
                }
            }
        }
        first.push(d);
        if let (Some(sec), Some(h2)) = (second.as_mut(), h2) {
            sec.push(h2);
        }

        // advance
        for k in 0..o.r {
            let l = p.lambda[k];
            for j in 0..m {
                let (a, b, c) = (s0[k][j], s1[k][j], s2[k][j]);
                s2[k][j] = two * b + l * c;
                s1[k][j] = a + l * b;
                s0[k][j] = log_sq[(t, j)] + l * a;
            }
        }
        for k in 0..o.s {
            let (gm, ph) = (p.gamma[k], p.phi[k]);
            let (zr, zi) = (gm * ph.cos(), gm * ph.sin());
            let acc = &mut cs[k];
            for j in 0..m {
                let (cr, ci) = (acc.re[j], acc.im[j]);
                let (c1r, c1i) = (acc.d1re[j], acc.d1im[j]);
                let (c2r, c2i) = (acc.d2re[j], acc.d2im[j]);
                let n2 = cmul(zr, zi, c2r, c2i);
                acc.d2re[j] = two * c1r + n2.0;
                acc.d2im[j] = two * c1i + n2.1;
                let n1 = cmul(zr, zi, c1r, c1i);
                acc.d1re[j] = cr + n1.0;
                acc.d1im[j] = ci + n1.1;
                let n0 = cmul(zr, zi, cr, ci);
                acc.re[j] = log_sq[(t, j)] + n0.0;
                acc.im[j] = n0.1;
            }
        }
    }
    Ok(VolDerivatives { first, second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelOrder;
    use crate::simulate::{dgp_catalog, Dgp};
    use approx::assert_relative_eq;

    #[test]
    fn phi_matrix_on_dgp1() {
        let p = dgp_catalog(Dgp::Dgp1, 0).unwrap();
        assert_relative_eq!(phi_matrix(&p, 1), DMatrix::from_element(2, 2, 0.045), epsilon = 1e-15);
        assert_relative_eq!(phi_matrix(&p, 2), DMatrix::from_element(2, 2, 0.036), epsilon = 1e-15);
    }

    #[test]
    fn phi_matrix_first_lag_of_complex_term_is_g1() {
        let p = dgp_catalog(Dgp::Dgp3, 0).unwrap();
        assert_eq!(phi_matrix(&p, 1), p.g1[0]);
    }

    #[test]
    fn log_squares() {
        let panel = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, -2.0]);
        let ls = log_sq_returns(&panel, 1e-8).unwrap();
        assert_eq!(ls.values[(0, 0)], 0.0);
        assert_relative_eq!(ls.values[(0, 1)], -36.841361487904734, epsilon = 1e-12);
        assert_relative_eq!(ls.values[(0, 2)], 4f64.ln(), epsilon = 1e-15);
        assert_eq!(ls.n_floored, 1);
        let bad = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert_eq!(
            log_sq_returns(&bad, 1e-8).unwrap_err(),
            Error::NonFiniteInput { row: 0, col: 1 }
        );
    }

    #[test]
    fn constant_model_has_flat_log_h() {
        let p = GeneralParams::constant(
            DVector::from_vec(vec![0.3, -0.2]),
            DMatrix::identity(2, 2),
            2,
        )
        .unwrap();
        let panel = DMatrix::from_fn(10, 2, |i, j| (i as f64 - 4.5) * (j as f64 + 1.0));
        let ls = log_sq_returns(&panel, 1e-8).unwrap();
        let path = run_filter(&p, &ls.values, &panel).unwrap();
        for t in 0..10 {
            assert_eq!(path.log_h[(t, 0)], 0.3);
            assert_eq!(path.log_h[(t, 1)], -0.2);
        }
    }

    #[test]
    fn single_lag_example() {
        let mut p = GeneralParams::constant(DVector::zeros(2), DMatrix::identity(2, 2), 2).unwrap();
        p.order = ModelOrder::new(2, 1, 0, 2).unwrap();
        p.lambda = vec![0.5];
        p.g0 = vec![DMatrix::identity(2, 2) * 0.1];
        let ly = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let panel = DMatrix::from_element(2, 2, 1.0);
        let path = run_filter(&p, &ly, &panel).unwrap();
        assert_relative_eq!(path.log_h[(1, 0)], 0.1, epsilon = 1e-15);
        assert_relative_eq!(path.log_h[(1, 1)], 0.1, epsilon = 1e-15);
        assert_relative_eq!(path.next_log_h[0], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let mut p = dgp_catalog(Dgp::Dgp1, 0).unwrap();
        p.omega_bar[0] = 800.0;
        let panel = DMatrix::from_element(3, 2, 1.0);
        let ls = log_sq_returns(&panel, 1e-8).unwrap();
        assert!(matches!(run_filter(&p, &ls.values, &panel), Err(Error::Overflow { t: 0, .. })));
    }

    #[test]
    fn g0_derivative_matches_truncated_sum() {
        let p = dgp_catalog(Dgp::Dgp1, 0).unwrap();
        let ly = DMatrix::from_row_slice(4, 2, &[0.3, -1.0, 2.0, 0.5, -0.7, 0.1, 1.0, 1.0]);
        let der = derivative_states(&p, &ly, false).unwrap();
        let lay = p.order.layout();
        // t = 3 (1-based) is row 2: Σ_{i=1}^{2} λ^{i−1} ln y²_{3−i}
        let s: Vec<f64> = (0..2).map(|j| ly[(1, j)] + 0.8 * ly[(0, j)]).collect();
        let d = &der.first[2];
        for j in 0..2 {
            for i in 0..2 {
                for r in 0..2 {
                    let want = if r == i { s[j] } else { 0.0 };
                    assert_relative_eq!(d[(r, lay.g0_entry(0, i, j))], want, epsilon = 1e-14);
                }
            }
        }
        for t in 0..4 {
            for i in 0..2 {
                for c in 0..2 {
                    assert_eq!(der.first[t][(i, c)], if i == c { 1.0 } else { 0.0 });
                }
            }
        }
    }
}
