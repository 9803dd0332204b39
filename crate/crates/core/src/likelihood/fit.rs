//! Multistart quasi-Newton estimation in unconstrained coordinates.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bfgs::{minimize, BfgsOptions};
use super::transform::{Transform, TransformKind};
use super::{evaluate, EvalSettings, Prepared, Target, Want};
use crate::corrfilter::sample_corr;
use crate::error::{Error, Result};
use crate::params::{GeneralParams, LowRankParams, ModelOrder, DEFAULT_MARGIN};
use crate::scalar::{count, lit, to_f64, Scalar};
use crate::stationarity::{stationarity_report, StationarityReport};

/// Which parameterization to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    General,
    LowRank,
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "general" | "g" => Ok(Self::General),
            "lowrank" | "low-rank" | "lr" => Ok(Self::LowRank),
            _ => Err(Error::UnknownName(format!("estimator `{s}`"))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::General => "general",
            Self::LowRank => "lowrank",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    /// Tolerance on the max-abs transformed gradient of `L̃_n / n`.
    pub grad_tol: f64,
    pub seed: u64,
    pub settings: EvalSettings,
    pub margin: f64,
    /// Warm start for the first run, flat in the estimator's pack order.
    pub initial: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 5,
            max_iter: 500,
            grad_tol: 1e-6,
            seed: 0,
            settings: EvalSettings::default(),
            margin: DEFAULT_MARGIN,
            initial: None,
        }
    }
}

impl FitOptions {
    /// Defaults for fits to market data: more random starts.
    pub fn empirical() -> Self {
        Self {
            n_starts: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.grad_tol) || !positive(self.margin) || self.margin >= 0.5 {
            return Err(Error::InvalidArgument(
                "grad_tol must be positive and margin in (0, 0.5)".into(),
            ));
        }
        let s = &self.settings;
        if !positive(s.floor) || !positive(s.eig_floor) || !(s.penalty >= 0.0) {
            return Err(Error::InvalidArgument("invalid evaluation settings".into()));
        }
        Ok(())
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub lambda_signs: Vec<f64>,
    /// `None` when no start point could be evaluated.
    pub neg_loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub n_evals: usize,
    pub gradient_norm: f64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitReport<T: Scalar> {
    pub estimator: Estimator,
    pub order: ModelOrder,
    pub params: GeneralParams<T>,
    pub lowrank: Option<LowRankParams<T>>,
    pub neg_loglik: T,
    pub n_obs: usize,
    /// `d` or `d*`, the number of free parameters optimized.
    pub dim: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Objective evaluations summed over all starts.
    pub n_evals: usize,
    /// Max-abs transformed gradient of `L̃_n / n` at the estimate.
    pub gradient_norm: f64,
    pub stationarity: StationarityReport,
    pub stationarity_margin: f64,
    pub pd_repair_count: usize,
    pub n_floored: usize,
    pub best_start: usize,
    pub starts: Vec<StartSummary>,
    /// Parameters that ended within 1e−3 of the boundary of the parameter space.
    pub boundary_flags: Vec<String>,
    pub presample_convention: String,
    pub options: FitOptions,
}

impl<T: Scalar> FitReport<T> {
    /// `2 L̃_n + d̄ ln n`.
    pub fn bic(&self) -> f64 {
        2.0 * to_f64(self.neg_loglik) + self.dim as f64 * (self.n_obs as f64).ln()
    }

    /// Estimates in the estimator's own pack order.
    pub fn estimate_vector(&self) -> DVector<T> {
        match &self.lowrank {
            Some(lr) => lr.pack(),
            None => self.params.pack(),
        }
    }

    /// The report when converged, otherwise `NoConvergence`.
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            let msgs: Vec<String> = self
                .starts
                .iter()
                .map(|s| format!("start {}: {}", s.index, s.message))
                .collect();
            Err(Error::NoConvergence(msgs.join("; ")))
        }
    }
}

const PRESAMPLE: &str =
    "log-volatility states start at zero; pre-sample residuals exp(-omega_bar/2); R_0 = Rbar";

pub fn fit_general<T: Scalar>(
    panel: &DMatrix<T>,
    order: ModelOrder,
    opts: &FitOptions,
) -> Result<FitReport<T>> {
    fit(panel, order, Estimator::General, opts)
}

pub fn fit_lowrank<T: Scalar>(
    panel: &DMatrix<T>,
    order: ModelOrder,
    opts: &FitOptions,
) -> Result<FitReport<T>> {
    fit(panel, order, Estimator::LowRank, opts)
}

struct RunResult<T: Scalar> {
    summary: StartSummary,
    u: Option<DVector<T>>,
    f: f64,
    transform: Transform,
}

/// Best-of-`n_starts` minimization of `L̃_n`.
///
/// A report is returned even when no run converges; check `converged` or call
/// [`FitReport::into_result`].
pub fn fit<T: Scalar>(
    panel: &DMatrix<T>,
    order: ModelOrder,
    estimator: Estimator,
    opts: &FitOptions,
) -> Result<FitReport<T>> {
    order.validate()?;
    opts.validate()?;
    let (n, m) = panel.shape();
    if m != order.m {
        return Err(Error::DimensionMismatch {
            what: "panel columns",
            expected: order.m,
            found: m,
        });
    }
    if n < order.k_window + 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least k_window + 10 = {} observations, got {n}",
            order.k_window + 10
        )));
    }
    let kind = match estimator {
        Estimator::General => TransformKind::General,
        Estimator::LowRank => TransformKind::LowRank,
    };
    let data = Prepared::new(panel, opts.settings.floor)?;
    let moments = Moments::new(panel, &data);
    let dim = match estimator {
        Estimator::General => order.dim_general(),
        Estimator::LowRank => order.dim_lowrank(),
    };
    let warm: Option<DVector<T>> = match &opts.initial {
        Some(v) => {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "initial parameter vector",
                    expected: dim,
                    found: v.len(),
                });
            }
            Some(DVector::from_iterator(dim, v.iter().map(|&x| lit::<T>(x))))
        }
        None => None,
    };

    let n_patterns = 1usize << order.r.min(16);
    let offset = {
        let mut root = ChaCha8Rng::seed_from_u64(opts.seed);
        root.set_stream(u64::MAX);
        root.random_range(0..n_patterns)
    };
    let bopts = BfgsOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        ..BfgsOptions::default()
    };

    let runs: Vec<RunResult<T>> = (0..opts.n_starts)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(idx as u64);
            let (signs, theta0) = match (&warm, idx) {
                (Some(w), 0) => {
                    let lam = order.layout().lambda;
                    let signs = (0..order.r)
                        .map(|k| if to_f64(w[lam + k]) < 0.0 { -1.0 } else { 1.0 })
                        .collect();
                    (signs, w.clone())
                }
                _ => {
                    let pattern = (offset + idx) % n_patterns;
                    let signs: Vec<f64> = (0..order.r)
                        .map(|k| if pattern >> k & 1 == 1 { -1.0 } else { 1.0 })
                        .collect();
                    let th = random_start::<T>(order, estimator, &signs, &moments, &mut rng);
                    (signs, th)
                }
            };
            let transform = Transform::new(order, kind, signs.clone(), opts.margin);
            run_one(idx, transform, theta0, &data, estimator, opts, &bopts)
        })
        .collect();

    let mut starts: Vec<StartSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    starts.sort_by_key(|s| s.index);
    let n_evals = starts.iter().map(|s| s.n_evals).sum();
    // Prefer converged runs, then the smallest objective.
    let best = runs
        .iter()
        .filter(|r| r.u.is_some())
        .min_by(|a, b| {
            (!a.summary.converged, a.f)
                .partial_cmp(&(!b.summary.converged, b.f))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or_else(|| {
            Error::NoConvergence("no start produced a finite objective".into())
        })?;
    let u = best.u.as_ref().expect("filtered");
    let theta = best.transform.to_params(u);

    let (params, lowrank) = match estimator {
        Estimator::General => {
            let p = GeneralParams::unpack_unchecked(theta.as_slice(), order)?;
            (p.canonicalize().unwrap_or(p), None)
        }
        Estimator::LowRank => {
            let lr = LowRankParams::unpack_unchecked(theta.as_slice(), order)?.normalized();
            let lr = lr.canonicalize().unwrap_or(lr);
            (lr.to_general(), Some(lr))
        }
    };
    let target = match &lowrank {
        Some(lr) => Target::LowRank(lr),
        None => Target::General(&params),
    };
    let final_eval = evaluate(target, &data, Want::Value, &opts.settings)?;
    let stationarity = stationarity_report(&params);
    let boundary_flags = boundary_flags(&params);
    Ok(FitReport {
        estimator,
        order,
        neg_loglik: final_eval.value,
        n_obs: n,
        dim,
        converged: best.summary.converged,
        iterations: best.summary.iterations,
        n_evals,
        gradient_norm: best.summary.gradient_norm,
        stationarity_margin: stationarity.margin,
        stationarity,
        pd_repair_count: final_eval.pd_repairs,
        n_floored: data.n_floored,
        best_start: best.summary.index,
        starts,
        boundary_flags,
        presample_convention: PRESAMPLE.into(),
        options: opts.clone(),
        params,
        lowrank,
    })
}

fn run_one<T: Scalar>(
    idx: usize,
    transform: Transform,
    mut theta0: DVector<T>,
    data: &Prepared<T>,
    estimator: Estimator,
    opts: &FitOptions,
    bopts: &BfgsOptions,
) -> RunResult<T> {
    let order = transform.order;
    let inv_n = T::one() / count::<T>(data.n);
    let mut objective = |u: &DVector<T>| -> Option<(T, DVector<T>)> {
        let th = transform.to_params(u);
        let ev = match estimator {
            Estimator::General => {
                let p = GeneralParams::unpack_unchecked(th.as_slice(), order).ok()?;
                evaluate(Target::General(&p), data, Want::Gradient, &opts.settings).ok()?
            }
            Estimator::LowRank => {
                let p = LowRankParams::unpack_unchecked(th.as_slice(), order).ok()?;
                evaluate(Target::LowRank(&p), data, Want::Gradient, &opts.settings).ok()?
            }
        };
        let g = ev.grad?;
        if !ev.value.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some((ev.value * inv_n, transform.pullback(u, &(g * inv_n))))
    };

    // Shrink the dynamics until the start point can be evaluated.
    let mut u0 = transform.from_params(&theta0);
    let mut usable = objective(&u0).is_some();
    let (g_lo, g_hi) = match estimator {
        Estimator::General => {
            let l = order.layout();
            (l.g0, l.beta1)
        }
        Estimator::LowRank => {
            let l = order.lowrank_layout();
            (l.g0, l.beta1)
        }
    };
    // halving factor matrices halves G; for factors, shrink right factors only
    let mut tries = 0;
    while !usable && tries < 10 {
        match estimator {
            Estimator::General => {
                for i in g_lo..g_hi {
                    theta0[i] *= lit(0.5);
                }
            }
            Estimator::LowRank => {
                let m = order.m;
                for (blk, i) in (g_lo..g_hi).enumerate() {
                    let vec_idx = blk / m;
                    if vec_idx % 2 == 1 {
                        theta0[i] *= lit(0.5);
                    }
                }
            }
        }
        u0 = transform.from_params(&theta0);
        usable = objective(&u0).is_some();
        tries += 1;
    }
    let signs = transform.lambda_signs.clone();
    if !usable {
        return RunResult {
            summary: StartSummary {
                index: idx,
                lambda_signs: signs,
                neg_loglik: None,
                converged: false,
                iterations: 0,
                n_evals: tries + 1,
                gradient_norm: f64::INFINITY,
                message: "objective undefined at the start point".into(),
            },
            u: None,
            f: f64::INFINITY,
            transform,
        };
    }
    let out = minimize(&mut objective, u0, bopts);
    let gnorm = out.grad.iter().fold(0.0f64, |a, &x| a.max(to_f64(x).abs()));
    let f = to_f64(out.f) * data.n as f64;
    log::debug!(
        "start {idx}: L = {f:.6}, |g| = {gnorm:.2e}, {} iterations, {}",
        out.iterations,
        out.message
    );
    RunResult {
        summary: StartSummary {
            index: idx,
            lambda_signs: signs,
            neg_loglik: Some(f),
            converged: out.converged,
            iterations: out.iterations,
            n_evals: out.n_evals + tries,
            gradient_norm: gnorm,
            message: out.message,
        },
        u: Some(out.x),
        f,
        transform,
    }
}

/// Marginal summaries of the panel used to scale random starts.
struct Moments {
    log_var: Vec<f64>,
    mean_ly: Vec<f64>,
    rbar: DMatrix<f64>,
}

impl Moments {
    fn new<T: Scalar>(panel: &DMatrix<T>, data: &Prepared<T>) -> Self {
        let (n, m) = panel.shape();
        let y = panel.map(|x| to_f64(x));
        let mut log_var = vec![0.0; m];
        let mut mean_ly = vec![0.0; m];
        for i in 0..m {
            let v = y.column(i).iter().map(|x| x * x).sum::<f64>() / n as f64;
            log_var[i] = v.max(1e-300).ln();
            mean_ly[i] = (0..n).map(|t| to_f64(data.ly_at(t, i))).sum::<f64>() / n as f64;
        }
        let rows: Vec<DVector<f64>> = (0..n)
            .map(|t| DVector::from_fn(m, |i, _| y[(t, i)] / (0.5 * log_var[i]).exp()))
            .collect();
        let mut rbar = sample_corr(&rows).unwrap_or_else(|_| DMatrix::identity(m, m));
        let eye = DMatrix::<f64>::identity(m, m);
        let mut shrink = 0.0;
        while rbar.clone().cholesky().is_none()
            || rbar.iter().enumerate().any(|(e, x)| e % (m + 1) != 0 && x.abs() > 0.99)
        {
            shrink += 0.1;
            rbar = &rbar * (1.0 - shrink) + &eye * shrink;
            if shrink >= 1.0 {
                rbar = eye.clone();
                break;
            }
        }
        Self {
            log_var,
            mean_ly,
            rbar,
        }
    }
}

fn random_start<T: Scalar>(
    order: ModelOrder,
    estimator: Estimator,
    signs: &[f64],
    mom: &Moments,
    rng: &mut ChaCha8Rng,
) -> DVector<T> {
    let m = order.m;
    let (r, s) = (order.r, order.s);
    let g_dist = Normal::new(0.0, 0.05).expect("valid sd");
    let left = Normal::new(0.0, 0.5).expect("valid sd");
    let right = Normal::new(0.0, 0.1).expect("valid sd");
    let lambda: Vec<f64> = signs.iter().map(|sg| sg * rng.random_range(0.3..0.9)).collect();
    let gamma: Vec<f64> = (0..s).map(|_| rng.random_range(0.3..0.9)).collect();
    let phi: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..2.5)).collect();
    let draw_vec = |d: &Normal<f64>, rng: &mut ChaCha8Rng| DVector::from_fn(m, |_, _| d.sample(rng));
    let omega = DVector::zeros(m);
    let mut lr = None;
    let mut gp = match estimator {
        Estimator::General => {
            let mut mat = || DMatrix::from_fn(m, m, |_, _| g_dist.sample(rng));
            let g0: Vec<_> = (0..r).map(|_| mat()).collect();
            let g1: Vec<_> = (0..s).map(|_| mat()).collect();
            let g2: Vec<_> = (0..s).map(|_| mat()).collect();
            GeneralParams {
                order,
                omega_bar: omega,
                lambda,
                gamma,
                phi,
                g0,
                g1,
                g2,
                beta1: 0.05,
                beta2: 0.8,
                rbar: mom.rbar.clone(),
            }
        }
        Estimator::LowRank => {
            let g0_factors: Vec<[DVector<f64>; 2]> = (0..r)
                .map(|_| [draw_vec(&left, rng), draw_vec(&right, rng)])
                .collect();
            let quad = |rng: &mut ChaCha8Rng| {
                [
                    draw_vec(&left, rng),
                    draw_vec(&right, rng),
                    draw_vec(&left, rng),
                    draw_vec(&right, rng),
                ]
            };
            let g1_factors: Vec<_> = (0..s).map(|_| quad(rng)).collect();
            let g2_factors: Vec<_> = (0..s).map(|_| quad(rng)).collect();
            let p = LowRankParams {
                order,
                omega_bar: omega,
                lambda,
                gamma,
                phi,
                g0_factors,
                g1_factors,
                g2_factors,
                beta1: 0.05,
                beta2: 0.8,
                rbar: mom.rbar.clone(),
            };
            let g = p.to_general();
            lr = Some(p);
            g
        }
    };
    // ω̄ so that the implied mean of ln h matches the marginal log-variance
    let mut total = DMatrix::<f64>::zeros(m, m);
    for k in 0..r {
        total += &gp.g0[k] / (1.0 - gp.lambda[k]);
    }
    for k in 0..s {
        let (re, im) = (gp.gamma[k] * gp.phi[k].cos(), gp.gamma[k] * gp.phi[k].sin());
        let den = (1.0 - re).powi(2) + im * im;
        total += &gp.g1[k] * ((1.0 - re) / den) + &gp.g2[k] * (im / den);
    }
    let mean_ly = DVector::from_column_slice(&mom.mean_ly);
    let omega = DVector::from_column_slice(&mom.log_var) - total * mean_ly;
    gp.omega_bar = omega.clone();
    let flat = match lr {
        Some(mut p) => {
            p.omega_bar = omega;
            p.pack()
        }
        None => gp.pack(),
    };
    flat.map(|x| lit::<T>(x))
}

fn boundary_flags<T: Scalar>(p: &GeneralParams<T>) -> Vec<String> {
    const TOL: f64 = 1e-3;
    let mut flags = Vec::new();
    let b1 = to_f64(p.beta1);
    let b2 = to_f64(p.beta2);
    if b1 < TOL {
        flags.push("beta1 near 0".into());
    }
    if b2 < TOL {
        flags.push("beta2 near 0".into());
    }
    if 1.0 - b1 - b2 < TOL {
        flags.push("beta1 + beta2 near 1".into());
    }
    for (k, l) in p.lambda.iter().enumerate() {
        let a = to_f64(*l).abs();
        if a < TOL || a > 1.0 - TOL {
            flags.push(format!("lambda[{}] near boundary", k + 1));
        }
    }
    for k in 0..p.gamma.len() {
        let g = to_f64(p.gamma[k]);
        if g < TOL || g > 1.0 - TOL {
            flags.push(format!("gamma[{}] near boundary", k + 1));
        }
        let f = to_f64(p.phi[k]);
        if f < TOL || f > std::f64::consts::PI - TOL {
            flags.push(format!("phi[{}] near boundary", k + 1));
        }
    }
    flags
}
