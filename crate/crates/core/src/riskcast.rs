//! Covariance forecasts, minimum-variance portfolios, rolling VaR and backtests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::corrfilter::{run_corr_filter, DEFAULT_EIG_FLOOR};
use crate::error::{Error, Result};
use crate::likelihood::{fit, Estimator, FitOptions, FitReport};
use crate::params::{GeneralParams, ModelOrder};
use crate::scalar::{lit, Scalar};
use crate::volfilter::{log_sq_returns, run_filter, DEFAULT_FLOOR};

/// Regressors of the DQ test: intercept, four lagged hits, the VaR forecast.
pub const DQ_DF: usize = 6;
pub const DQ_LAGS: usize = 4;
pub const QUANTILE_CONVENTION: &str = "linear interpolation (type 7)";

fn h_from(log_h: &DVector<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let d = log_h.map(|x| (0.5 * x).exp());
    DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| d[i] * r[(i, j)] * d[j])
}

/// One-step-ahead `Ĥ` after observing every row of `history`.
pub fn forecast_h<T: Scalar>(p: &GeneralParams<T>, history: &DMatrix<T>) -> Result<DMatrix<T>> {
    let kw = p.order.k_window;
    if history.nrows() < kw {
        return Err(Error::InvalidArgument(format!(
            "history of {} rows is shorter than the window {kw}",
            history.nrows()
        )));
    }
    let ls = log_sq_returns(history, lit(DEFAULT_FLOOR))?;
    let vol = run_filter(p, &ls.values, history)?;
    let corr = run_corr_filter(p, &vol.eps, lit(DEFAULT_EIG_FLOOR))?;
    let r = corr.r.last().expect("n + 1 correlation matrices");
    let half: T = lit(0.5);
    let d = vol.next_log_h.map(|x| (x * half).exp());
    let m = p.order.m;
    Ok(DMatrix::from_fn(m, m, |i, j| d[i] * r[(i, j)] * d[j]))
}

/// [`forecast_h`] with the estimate of a fit.
pub fn forecast_h_fit<T: Scalar>(fit: &FitReport<T>, history: &DMatrix<T>) -> Result<DMatrix<T>> {
    forecast_h(&fit.params, history)
}

/// Minimum-variance weights `H⁻¹1 / (1ᵀH⁻¹1)`.
pub fn mv_weights<T: Scalar>(h: &DMatrix<T>) -> Result<DVector<T>> {
    let m = h.nrows();
    if h.ncols() != m || m == 0 {
        return Err(Error::SingularH);
    }
    let chol = h.clone().cholesky().ok_or(Error::SingularH)?;
    let x = chol.solve(&DVector::from_element(m, T::one()));
    let total = x.sum();
    if !total.is_finite() || total <= T::zero() {
        return Err(Error::SingularH);
    }
    Ok(x / total)
}

/// Type-7 sample quantile of `x` at level `tau`.
pub fn quantile(x: &[f64], tau: f64) -> f64 {
    let mut v: Vec<f64> = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * tau.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcrPe {
    /// Hit rate in percent.
    pub ecr: f64,
    pub pe: f64,
}

/// Empirical coverage rate and `|ECR − τ| / sqrt(τ(1−τ)/n_out)`.
pub fn ecr_pe(hits: &[u8], tau: f64) -> EcrPe {
    let n = hits.len() as f64;
    let rate = hits.iter().map(|&h| h as f64).sum::<f64>() / n;
    EcrPe {
        ecr: 100.0 * rate,
        pe: (rate - tau).abs() / (tau * (1.0 - tau) / n).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcTest {
    pub lr_uc: f64,
    pub lr_ind: f64,
    pub stat: f64,
    pub p: f64,
}

/// `a ln b` with `0 ln 0 = 0`.
fn xlogy(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b.ln()
    }
}

fn bernoulli_ll(n0: f64, n1: f64, p: f64) -> f64 {
    xlogy(n0, 1.0 - p) + xlogy(n1, p)
}

/// Conditional-coverage likelihood ratio test against χ²(2).
pub fn cc_test(hits: &[u8], tau: f64) -> Result<CcTest> {
    if hits.len() < 10 {
        return Err(Error::InvalidArgument("cc_test needs at least 10 hits".into()));
    }
    check_tau(tau)?;
    let n1 = hits.iter().filter(|&&h| h == 1).count() as f64;
    let n0 = hits.len() as f64 - n1;
    let lr_uc = -2.0 * (bernoulli_ll(n0, n1, tau) - bernoulli_ll(n0, n1, n1 / (n0 + n1)));
    let lr_ind = if n1 == 0.0 {
        0.0
    } else {
        let mut c = [[0.0f64; 2]; 2];
        for w in hits.windows(2) {
            c[w[0] as usize][w[1] as usize] += 1.0;
        }
        let (n00, n01, n10, n11) = (c[0][0], c[0][1], c[1][0], c[1][1]);
        let p01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
        let p11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
        let p = (n01 + n11) / (n00 + n01 + n10 + n11);
        let restricted = bernoulli_ll(n00 + n10, n01 + n11, p);
        let free = bernoulli_ll(n00, n01, p01) + bernoulli_ll(n10, n11, p11);
        -2.0 * (restricted - free)
    };
    let lr_uc = lr_uc.max(0.0);
    let lr_ind = lr_ind.max(0.0);
    let stat = lr_uc + lr_ind;
    Ok(CcTest {
        lr_uc,
        lr_ind,
        stat,
        p: chi2_sf(stat, 2.0),
    })
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").sf(x)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau = {tau} must lie in (0, 1)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqTest {
    pub stat: f64,
    pub p: f64,
    pub df: usize,
    pub coefficients: Vec<f64>,
    /// Regressors dropped as linearly dependent on earlier ones (0 = intercept).
    pub dropped: Vec<usize>,
    pub collinear: bool,
}

/// Dynamic-quantile test: `(ℏ_t − τ)` on `[1, ℏ_{t−1..t−4}, Q̂_t]`, against χ²(6).
///
/// Columns linearly dependent on earlier ones are dropped (their coefficient is
/// zero), which leaves the quadratic form unchanged; the fit is then flagged.
pub fn dq_test(hits: &[u8], var_series: &[f64], tau: f64) -> Result<DqTest> {
    let n = hits.len();
    if var_series.len() != n {
        return Err(Error::DimensionMismatch {
            what: "VaR series",
            expected: n,
            found: var_series.len(),
        });
    }
    if n <= DQ_LAGS + 7 {
        return Err(Error::InvalidArgument(format!(
            "dq_test needs more than {} observations",
            DQ_LAGS + 7
        )));
    }
    check_tau(tau)?;
    let rows = n - DQ_LAGS;
    let k = DQ_LAGS + 2;
    let x = DMatrix::from_fn(rows, k, |t, c| {
        let tt = t + DQ_LAGS;
        match c {
            0 => 1.0,
            c if c <= DQ_LAGS => hits[tt - c] as f64,
            _ => var_series[tt],
        }
    });
    let y = DVector::from_fn(rows, |t, _| hits[t + DQ_LAGS] as f64 - tau);

    // greedy column selection by Gram-Schmidt residual size
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..k {
        let col = x.column(c).into_owned();
        let mut res = col.clone();
        for q in &basis {
            res -= q * q.dot(&res);
        }
        let scale = col.norm();
        if scale > 0.0 && res.norm() > 1e-10 * scale {
            basis.push(&res / res.norm());
            kept.push(c);
        } else {
            dropped.push(c);
        }
    }
    let xs = DMatrix::from_fn(rows, kept.len(), |t, j| x[(t, kept[j])]);
    let xtx = xs.transpose() * &xs;
    let b = xtx
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&(xs.transpose() * &y)))
        .ok_or_else(|| Error::InvalidArgument("DQ design is degenerate".into()))?;
    let stat = (b.transpose() * &xtx * &b)[(0, 0)] / (tau * (1.0 - tau));
    let mut coefficients = vec![0.0; k];
    for (j, &c) in kept.iter().enumerate() {
        coefficients[c] = b[j];
    }
    Ok(DqTest {
        stat,
        p: chi2_sf(stat, DQ_DF as f64),
        df: DQ_DF,
        coefficients,
        collinear: !dropped.is_empty(),
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarBacktestReport {
    pub tau: f64,
    /// Row index in the input panel of each forecast.
    pub origins: Vec<usize>,
    /// `Q̂_τ`, the forecast τ-quantile of the portfolio return.
    pub var_series: Vec<f64>,
    pub portfolio_series: Vec<f64>,
    pub sigma_series: Vec<f64>,
    pub hits: Vec<u8>,
    pub ecr: f64,
    pub pe: f64,
    pub cc: Option<CcTest>,
    pub dq: Option<DqTest>,
    pub quantile_convention: String,
}

impl VarBacktestReport {
    pub fn from_series(
        tau: f64,
        origins: Vec<usize>,
        var_series: Vec<f64>,
        portfolio_series: Vec<f64>,
        sigma_series: Vec<f64>,
    ) -> Self {
        let hits: Vec<u8> = portfolio_series
            .iter()
            .zip(&var_series)
            .map(|(z, q)| u8::from(z < q))
            .collect();
        let EcrPe { ecr, pe } = ecr_pe(&hits, tau);
        let cc = cc_test(&hits, tau).ok();
        let dq = dq_test(&hits, &var_series, tau).ok();
        Self {
            tau,
            origins,
            var_series,
            portfolio_series,
            sigma_series,
            hits,
            ecr,
            pe,
            cc,
            dq,
            quantile_convention: QUANTILE_CONVENTION.into(),
        }
    }

    /// CSV with columns `t,z,sigma,var,hit`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,z,sigma,var,hit\n");
        for k in 0..self.hits.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.origins[k],
                self.portfolio_series[k],
                self.sigma_series[k],
                self.var_series[k],
                self.hits[k]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingOptions {
    /// Trailing window length `n0`.
    pub window: usize,
    pub levels: Vec<f64>,
    /// Origins between refits; weights and `b̂_τ` follow the same cadence.
    pub refit_every: usize,
    pub estimator: Estimator,
    pub fit: FitOptions,
}

impl Default for RollingOptions {
    fn default() -> Self {
        Self {
            window: 500,
            levels: vec![0.01, 0.025, 0.05, 0.95, 0.975, 0.99],
            refit_every: 1,
            estimator: Estimator::General,
            fit: FitOptions::default(),
        }
    }
}

impl RollingOptions {
    /// Weekly re-estimation.
    pub fn weekly() -> Self {
        Self {
            refit_every: 5,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollingVar {
    pub reports: Vec<VarBacktestReport>,
    /// Origins excluded because the estimate for them failed.
    pub failed_origins: Vec<usize>,
    pub n_refits: usize,
}

struct Calibration {
    b: Vec<f64>,
}

/// Window-internal standardized MV residuals and the forecast for the next row.
fn origin_forecast(
    p: &GeneralParams<f64>,
    window: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let ls = log_sq_returns(window, DEFAULT_FLOOR)?;
    let vol = run_filter(p, &ls.values, window)?;
    let corr = run_corr_filter(p, &vol.eps, DEFAULT_EIG_FLOOR)?;
    let mut resid = Vec::with_capacity(window.nrows());
    for s in 0..window.nrows() {
        let h = h_from(&vol.log_h.row(s).transpose(), &corr.r[s]);
        let w = mv_weights(&h)?;
        let z = w.dot(&window.row(s).transpose());
        let sd = (w.dot(&(&h * &w))).sqrt();
        resid.push(z / sd);
    }
    let h_next = h_from(&vol.next_log_h, corr.r.last().expect("forecast R"));
    Ok((resid, h_next))
}

/// Rolling one-step VaR over every origin `t ≥ n0`, re-estimating on the
/// trailing `n0` rows every `refit_every` origins (warm-started from the
/// previous estimate) and filtering forward with the current estimate between refits.
pub fn rolling_var(panel: &DMatrix<f64>, order: ModelOrder, opts: &RollingOptions) -> Result<RollingVar> {
    rolling_core(panel, opts, |window, prev| {
        let fopts = match prev {
            Some(prev) => FitOptions {
                n_starts: 1,
                initial: Some(prev),
                ..opts.fit.clone()
            },
            _ => opts.fit.clone(),
        };
        let rep = fit(window, order, opts.estimator, &fopts)?.into_result()?;
        Ok((rep.params.clone(), rep.estimate_vector().as_slice().to_vec()))
    })
}

/// [`rolling_var`] with known parameters and no estimation.
pub fn rolling_var_fixed(panel: &DMatrix<f64>, p: &GeneralParams<f64>, opts: &RollingOptions) -> Result<RollingVar> {
    let flat = p.pack().as_slice().to_vec();
    rolling_core(panel, opts, |_, _| Ok((p.clone(), flat.clone())))
}

fn rolling_core<F>(panel: &DMatrix<f64>, opts: &RollingOptions, mut estimate: F) -> Result<RollingVar>
where
    F: FnMut(&DMatrix<f64>, Option<Vec<f64>>) -> Result<(GeneralParams<f64>, Vec<f64>)>,
{
    let n = panel.nrows();
    let n0 = opts.window;
    if n0 == 0 || n0 >= n {
        return Err(Error::InvalidArgument(format!("window {n0} must lie in 1..{n}")));
    }
    if opts.refit_every == 0 {
        return Err(Error::InvalidArgument("refit_every must be at least 1".into()));
    }
    if opts.levels.is_empty() {
        return Err(Error::InvalidArgument("no VaR levels requested".into()));
    }
    for &tau in &opts.levels {
        check_tau(tau)?;
    }
    let nl = opts.levels.len();
    let mut series: Vec<(Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new(), Vec::new(), Vec::new()); nl];
    let mut failed = Vec::new();
    let mut current: Option<GeneralParams<f64>> = None;
    let mut last_flat: Option<Vec<f64>> = None;
    let mut calib: Option<Calibration> = None;
    let mut n_refits = 0;
    for (k, t) in (n0..n).enumerate() {
        let window = panel.rows(t - n0, n0).into_owned();
        let refit = k % opts.refit_every == 0;
        if refit {
            n_refits += 1;
            match estimate(&window, last_flat.clone()) {
                Ok((p, flat)) => {
                    current = Some(p);
                    last_flat = Some(flat);
                }
                Err(e) => {
                    log::warn!("estimation failed at origin {t}: {e}");
                    current = None;
                }
            }
        }
        let Some(p) = current.as_ref() else {
            failed.push(t);
            continue;
        };
        let (resid, h) = match origin_forecast(p, &window) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("forecast failed at origin {t}: {e}");
                failed.push(t);
                continue;
            }
        };
        if refit || calib.is_none() {
            calib = Some(Calibration {
                b: opts.levels.iter().map(|&tau| quantile(&resid, tau)).collect(),
            });
        }
        let Ok(w) = mv_weights(&h) else {
            failed.push(t);
            continue;
        };
        let y = panel.row(t).transpose();
        let z = w.dot(&y);
        let sigma = w.dot(&(&h * &w)).sqrt();
        let b = &calib.as_ref().expect("set above").b;
        for (l, s) in series.iter_mut().enumerate() {
            s.0.push(t);
            s.1.push(sigma * b[l]);
            s.2.push(z);
            s.3.push(sigma);
        }
    }
    let reports = opts
        .levels
        .iter()
        .zip(series)
        .map(|(&tau, (o, q, z, sd))| VarBacktestReport::from_series(tau, o, q, z, sd))
        .collect();
    Ok(RollingVar {
        reports,
        failed_origins: failed,
        n_refits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{dgp_catalog, simulate, Dgp, SimulateOptions};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mv_weight_examples() {
        let w = mv_weights(&DMatrix::<f64>::identity(4, 4)).unwrap();
        assert_relative_eq!(w, DVector::from_element(4, 0.25), epsilon = 1e-15);
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let w = mv_weights(&h).unwrap();
        assert_relative_eq!(w, DVector::from_vec(vec![0.8, 0.2]), epsilon = 1e-15);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(mv_weights(&sing), Err(Error::SingularH)));
    }

    #[test]
    fn mv_variance_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let h = &a * a.transpose() + DMatrix::identity(3, 3) * 0.05;
            let w = mv_weights(&h).unwrap();
            assert!((w.sum() - 1.0f64).abs() < 1e-12);
            let inv = h.clone().try_inverse().unwrap();
            let v = w.dot(&(&h * &w));
            assert_relative_eq!(v, 1.0 / inv.sum(), max_relative = 1e-10);
        }
    }

    #[test]
    fn constant_model_forecast() {
        let rbar = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let omega = DVector::from_vec(vec![0.2f64, -0.4]);
        let p = GeneralParams::constant(omega.clone(), rbar.clone(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-1.0..1.0));
        let h = forecast_h(&p, &y).unwrap();
        let d = DMatrix::from_diagonal(&omega.map(|x| (0.5 * x).exp()));
        assert_relative_eq!(h, &d * rbar * &d, epsilon = 1e-14);
    }

    #[test]
    fn forecast_matches_simulator_path() {
        let p = dgp_catalog(Dgp::Dgp3, 0).unwrap();
        let sim = simulate(&p, 200, &SimulateOptions::default(), 4).unwrap();
        let full = sim.full_panel();
        for t in [3usize, 50, 400, 650] {
            let h = forecast_h(&p, &full.rows(0, t).into_owned()).unwrap();
            assert_relative_eq!(h, sim.h_at(t), max_relative = 1e-10);
        }
        // perturbing y_t leaves Ĥ_t unchanged
        let mut hist = full.rows(0, 101).into_owned();
        let before = forecast_h(&p, &hist.rows(0, 100).into_owned()).unwrap();
        hist[(100, 0)] += 5.0;
        let after = forecast_h(&p, &hist.rows(0, 100).into_owned()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn quantile_type7() {
        let x = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
        assert_relative_eq!(quantile(&x, 0.5), 2.5);
        assert_relative_eq!(quantile(&x, 0.1), 1.3);
    }

    #[test]
    fn ecr_pe_examples() {
        let zeros = vec![0u8; 100];
        let e = ecr_pe(&zeros, 0.05);
        assert_eq!(e.ecr, 0.0);
        assert_relative_eq!(e.pe, 0.05 / (0.0475f64 / 100.0).sqrt(), epsilon = 1e-12);
        assert!((e.pe - 2.294).abs() < 1e-3);
        let mut h = vec![0u8; 100];
        for k in 0..5 {
            h[k * 20] = 1;
        }
        assert_eq!(ecr_pe(&h, 0.05).pe, 0.0);
    }

    #[test]
    fn cc_examples() {
        let zeros = vec![0u8; 100];
        let c = cc_test(&zeros, 0.05).unwrap();
        assert_relative_eq!(c.lr_uc, -200.0 * 0.95f64.ln(), epsilon = 1e-10);
        assert!((c.lr_uc - 10.259).abs() < 1e-3);
        assert_eq!(c.lr_ind, 0.0);
        assert!((c.p - 0.0059).abs() < 1e-4, "{}", c.p);
        let mut h = vec![0u8; 100];
        for k in 0..5 {
            h[k * 20 + 7] = 1;
        }
        assert!(cc_test(&h, 0.05).unwrap().lr_uc.abs() < 1e-12);
        assert!(cc_test(&h[..5], 0.05).is_err());
    }

    #[test]
    fn dq_degenerate_design() {
        let hits = vec![0u8; 60];
        let var = vec![-1.5; 60];
        let d = dq_test(&hits, &var, 0.05).unwrap();
        assert!(d.collinear);
        assert_eq!(d.dropped, vec![1, 2, 3, 4, 5]);
        assert_relative_eq!(d.coefficients[0], -0.05, epsilon = 1e-14);
        assert!(d.coefficients[1..].iter().all(|&b| b == 0.0));
        // ‖X b‖² = 56 τ², divided by τ(1−τ)
        assert_relative_eq!(d.stat, 56.0 * 0.05 / 0.95, epsilon = 1e-10);
        assert_eq!(d.df, 6);
    }

    #[test]
    fn fixed_parameter_backtest_bookkeeping() {
        let p = dgp_catalog(Dgp::Dgp1, 0).unwrap();
        let y = simulate(&p, 400, &SimulateOptions::default(), 5).unwrap().panel;
        let opts = RollingOptions {
            window: 300,
            levels: vec![0.05, 0.5],
            ..RollingOptions::default()
        };
        let out = rolling_var_fixed(&y, &p, &opts).unwrap();
        assert_eq!(out.reports.len(), 2);
        let r = &out.reports[0];
        assert_eq!(r.hits.len(), 100);
        assert_eq!(r.origins[0], 300);
        assert_relative_eq!(r.ecr, 100.0 * r.hits.iter().map(|&h| h as f64).sum::<f64>() / 100.0);
        let med = &out.reports[1];
        assert!(med.ecr > 35.0 && med.ecr < 65.0, "{}", med.ecr);
        assert!(r.cc.is_some() && r.dq.is_some());
        assert_eq!(r.to_csv().lines().count(), 101);
    }

    #[test]
    fn hits_are_out_of_sample() {
        let p = dgp_catalog(Dgp::Dgp1, 0).unwrap();
        let y = simulate(&p, 300, &SimulateOptions::default(), 6).unwrap().panel;
        let opts = RollingOptions {
            window: 200,
            levels: vec![0.05],
            refit_every: 5,
            ..RollingOptions::default()
        };
        let a = rolling_var_fixed(&y, &p, &opts).unwrap();
        let mut y2 = y.clone();
        for t in 260..300 {
            y2[(t, 0)] *= 3.0;
        }
        let b = rolling_var_fixed(&y2, &p, &opts).unwrap();
        assert_eq!(a.reports[0].hits[..60], b.reports[0].hits[..60]);
        assert_eq!(a.reports[0].var_series[..60], b.reports[0].var_series[..60]);
    }

    #[test]
    fn estimated_rolling_run() {
        let p = dgp_catalog(Dgp::Dgp1, 0).unwrap();
        let y = simulate(&p, 520, &SimulateOptions::default(), 7).unwrap().panel;
        let opts = RollingOptions {
            window: 500,
            levels: vec![0.05],
            refit_every: 10,
            fit: FitOptions {
                n_starts: 2,
                ..FitOptions::default()
            },
            ..RollingOptions::default()
        };
        let out = rolling_var(&y, p.order, &opts).unwrap();
        assert_eq!(out.n_refits, 2);
        assert_eq!(out.reports[0].hits.len() + out.failed_origins.len(), 20);
    }

    #[test]
    fn rejects_bad_options() {
        let p = dgp_catalog(Dgp::Dgp1, 0).unwrap();
        let y = DMatrix::from_element(50, 2, 0.1);
        let mut o = RollingOptions {
            window: 50,
            ..RollingOptions::default()
        };
        assert!(rolling_var_fixed(&y, &p, &o).is_err());
        o.window = 20;
        o.refit_every = 0;
        assert!(rolling_var_fixed(&y, &p, &o).is_err());
        o.refit_every = 1;
        o.levels = vec![1.5];
        assert!(rolling_var_fixed(&y, &p, &o).is_err());
    }
}
