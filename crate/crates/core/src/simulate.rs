//! Path simulation and the DGP catalog.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::corrfilter::{ensure_pd, CorrState, DEFAULT_EIG_FLOOR};
use crate::error::{Error, Result};
use crate::params::{GeneralParams, LowRankParams, ModelOrder};
use crate::scalar::{lit, to_f64, Scalar};
use crate::stationarity::{stationarity_report, StationarityReport};
use crate::volfilter::{VolFilterState, DEFAULT_FLOOR, LOG_H_LIMIT};

/// Innovation distribution; Student-t components are scaled to unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Innovation {
    Normal,
    T { nu: f64 },
}

impl FromStr for Innovation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "normal" {
            return Ok(Self::Normal);
        }
        let nu = s
            .strip_prefix("t")
            .map(|x| x.trim_start_matches(['(', '_']).trim_end_matches(')'))
            .and_then(|x| x.parse::<f64>().ok())
            .ok_or_else(|| Error::UnknownName(format!("innovation '{s}'")))?;
        if !(nu > 2.0) {
            return Err(Error::InvalidArgument("t innovations need nu > 2".into()));
        }
        Ok(Self::T { nu })
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal => write!(f, "normal"),
            Self::T { nu } => write!(f, "t{nu}"),
        }
    }
}

/// Draws one unit-variance innovation vector.
pub struct InnovationSampler {
    dist: Innovation,
    t: Option<(StudentT<f64>, f64)>,
}

impl InnovationSampler {
    pub fn new(dist: Innovation) -> Result<Self> {
        let t = match dist {
            Innovation::Normal => None,
            Innovation::T { nu } => {
                let d = StudentT::new(nu)
                    .map_err(|e| Error::InvalidArgument(format!("t innovations: {e}")))?;
                Some((d, ((nu - 2.0) / nu).sqrt()))
            }
        };
        Ok(Self { dist, t })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (&self.dist, &self.t) {
            (Innovation::T { .. }, Some((d, scale))) => d.sample(rng) * scale,
            _ => StandardNormal.sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOptions {
    /// Discarded leading observations; `None` means `max(500, 5 k_window)`.
    pub burn: Option<usize>,
    pub dist: Innovation,
    /// Simulate even if the stationarity condition is not verified.
    pub allow_nonstationary: bool,
    pub floor: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            burn: None,
            dist: Innovation::Normal,
            allow_nonstationary: false,
            floor: DEFAULT_FLOOR,
        }
    }
}

pub fn default_burn(k_window: usize) -> usize {
    500.max(5 * k_window)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimDiagnostics {
    pub seed: u64,
    pub burn: usize,
    pub dist: Innovation,
    pub sqrt_convention: String,
    pub stationarity: StationarityReport,
    pub pd_repairs: usize,
    pub max_abs_log_h: f64,
}

/// A simulated path. Rows of `burn_panel` precede those of `panel`.
#[derive(Debug, Clone)]
pub struct Simulation<T: Scalar> {
    pub panel: DMatrix<T>,
    pub burn_panel: DMatrix<T>,
    /// `ln h_t` over the full path (burn-in first).
    pub log_h: DMatrix<T>,
    /// `ε_t` over the full path.
    pub eps: DMatrix<T>,
    /// `R_t` over the full path.
    pub r: Vec<DMatrix<T>>,
    pub diagnostics: SimDiagnostics,
}

impl<T: Scalar> Simulation<T> {
    /// Burn-in rows followed by the kept rows.
    pub fn full_panel(&self) -> DMatrix<T> {
        let (b, n, m) = (self.burn_panel.nrows(), self.panel.nrows(), self.panel.ncols());
        DMatrix::from_fn(b + n, m, |i, j| {
            if i < b {
                self.burn_panel[(i, j)]
            } else {
                self.panel[(i - b, j)]
            }
        })
    }

    /// `H_t = D_t R_t D_t` at full-path row `t`.
    pub fn h_at(&self, t: usize) -> DMatrix<T> {
        let half: T = lit(0.5);
        let d = self.log_h.row(t).map(|x| (x * half).exp()).transpose();
        let dm = DMatrix::from_diagonal(&d);
        &dm * &self.r[t] * &dm
    }
}

pub fn simulate<T: Scalar>(
    p: &GeneralParams<T>,
    n: usize,
    opts: &SimulateOptions,
    seed: u64,
) -> Result<Simulation<T>> {
    p.validate()?;
    let o = p.order;
    let burn = opts.burn.unwrap_or_else(|| default_burn(o.k_window));
    if burn < o.k_window {
        return Err(Error::InvalidArgument(format!(
            "burn = {burn} is shorter than k_window = {}",
            o.k_window
        )));
    }
    let stationarity = stationarity_report(p);
    if !stationarity.satisfied && !opts.allow_nonstationary {
        return Err(Error::ConstraintViolation(format!(
            "stationarity condition not verified (smallest sum {:.4}); set allow_nonstationary to override",
            stationarity.min_sum
        )));
    }
    let sampler = InnovationSampler::new(opts.dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = burn + n;
    let m = o.m;
    let half: T = lit(0.5);
    let f2: T = lit(opts.floor * opts.floor);
    let eig_floor: T = lit(DEFAULT_EIG_FLOOR);

    let mut vol = VolFilterState::for_params(p);
    let mut corr = CorrState::new(p);
    let mut y = DMatrix::zeros(total, m);
    let mut log_h = DMatrix::zeros(total, m);
    let mut eps = DMatrix::zeros(total, m);
    let mut rs = Vec::with_capacity(total);
    let mut pd_repairs = 0;
    let mut max_abs = 0.0f64;
    for t in 0..total {
        let lh = vol.log_h(p);
        for &x in lh.iter() {
            let v = to_f64(x);
            if !(v.abs() <= LOG_H_LIMIT) {
                return Err(Error::ExplosivePath { t, value: v });
            }
            max_abs = max_abs.max(v.abs());
        }
        let rt = corr.step(p)?;
        let chol = match rt.clone().cholesky() {
            Some(c) => c,
            None => {
                pd_repairs += 1;
                let (fixed, _) = ensure_pd(&rt, eig_floor);
                corr.r_prev = fixed.clone();
                fixed.cholesky().ok_or(Error::SingularH)?
            }
        };
        let eta = DVector::from_fn(m, |_, _| lit::<T>(sampler.draw(&mut rng)));
        let e = chol.l() * eta;
        let mut ly = DVector::zeros(m);
        for i in 0..m {
            let yi = e[i] * (lh[i] * half).exp();
            y[(t, i)] = yi;
            log_h[(t, i)] = lh[i];
            eps[(t, i)] = e[i];
            let y2 = yi * yi;
            ly[i] = if y2 < f2 { f2.ln() } else { y2.ln() };
        }
        rs.push(corr.r_prev.clone());
        vol.advance(p, &ly);
        corr.push(e);
    }
    Ok(Simulation {
        panel: y.rows(burn, n).into_owned(),
        burn_panel: y.rows(0, burn).into_owned(),
        log_h,
        eps,
        r: rs,
        diagnostics: SimDiagnostics {
            seed,
            burn,
            dist: opts.dist,
            sqrt_convention: "H^(1/2) = D_t chol(R_t), lower triangular".into(),
            stationarity,
            pd_repairs,
            max_abs_log_h: max_abs,
        },
    })
}

/// Named data-generating processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dgp {
    Dgp1,
    Dgp2,
    Dgp3,
    Dgp4,
    Dgp5,
}

impl FromStr for Dgp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DGP1" | "1" => Ok(Self::Dgp1),
            "DGP2" | "2" => Ok(Self::Dgp2),
            "DGP3" | "3" => Ok(Self::Dgp3),
            "DGP4" | "4" => Ok(Self::Dgp4),
            "DGP5" | "5" => Ok(Self::Dgp5),
            _ => Err(Error::UnknownName(format!("DGP '{s}'"))),
        }
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self {
            Self::Dgp1 => 1,
            Self::Dgp2 => 2,
            Self::Dgp3 => 3,
            Self::Dgp4 => 4,
            Self::Dgp5 => 5,
        };
        write!(f, "DGP{k}")
    }
}

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn equicorrelation(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho })
}

/// Catalog entry in factor form. `seed` only affects DGP5.
pub fn dgp_factors(dgp: Dgp, seed: u64) -> Result<LowRankParams<f64>> {
    let (m, r, s) = match dgp {
        Dgp::Dgp1 => (2, 1, 0),
        Dgp::Dgp2 => (2, 2, 0),
        Dgp::Dgp3 => (2, 0, 1),
        Dgp::Dgp4 => (5, 1, 0),
        Dgp::Dgp5 => (20, 1, 0),
    };
    let omega = if m == 20 { 1.3 } else { 1.45 };
    let mut p = LowRankParams {
        order: ModelOrder::with_default_window(m, r, s)?,
        omega_bar: DVector::from_element(m, omega),
        lambda: vec![],
        gamma: vec![],
        phi: vec![],
        g0_factors: vec![],
        g1_factors: vec![],
        g2_factors: vec![],
        beta1: 0.1,
        beta2: 0.8,
        rbar: equicorrelation(m, 0.5),
    };
    match dgp {
        Dgp::Dgp1 => {
            p.lambda = vec![0.8];
            p.g0_factors = vec![[dv(&[1.0, 1.0]), dv(&[0.045, 0.045])]];
        }
        Dgp::Dgp2 => {
            p.lambda = vec![0.8, -0.8];
            p.g0_factors = vec![
                [dv(&[1.0, 1.0]), dv(&[0.045, 0.045])],
                [dv(&[1.0, -1.0]), dv(&[0.045, -0.045])],
            ];
        }
        Dgp::Dgp3 => {
            p.gamma = vec![0.8];
            p.phi = vec![0.7];
            p.g1_factors = vec![[
                dv(&[0.8, 0.6]),
                dv(&[0.064, 0.062]),
                dv(&[-0.6, 0.8]),
                dv(&[0.002, 0.016]),
            ]];
            p.g2_factors = vec![[
                dv(&[0.8, 0.6]),
                dv(&[0.002, 0.016]),
                dv(&[0.6, -0.8]),
                dv(&[0.064, 0.062]),
            ]];
        }
        Dgp::Dgp4 => {
            p.lambda = vec![0.8];
            p.g0_factors = vec![[
                dv(&[1.00, 0.96, 0.92, 0.88, 0.86]),
                dv(&[0.025, 0.0255, 0.0265, 0.028, 0.03]),
            ]];
        }
        Dgp::Dgp5 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u1 = Uniform::new(0.5, 0.6).expect("valid range");
            let u2 = Uniform::new(0.03, 0.05).expect("valid range");
            let a = DVector::from_fn(m, |_, _| u1.sample(&mut rng));
            let b = DVector::from_fn(m, |_, _| u2.sample(&mut rng));
            p.lambda = vec![0.5];
            p.g0_factors = vec![[a, b]];
        }
    }
    p.validate()?;
    Ok(p)
}

/// Catalog entry as general parameters. `seed` only affects DGP5.
pub fn dgp_catalog(dgp: Dgp, seed: u64) -> Result<GeneralParams<f64>> {
    let p = dgp_factors(dgp, seed)?.to_general();
    p.validate()?;
    Ok(p)
}
