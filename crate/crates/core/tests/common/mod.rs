#![allow(dead_code)]

use mgarch::params::{GeneralParams, ModelOrder};
use mgarch::volfilter::run_filter;
use mgarch::corrfilter::run_corr_filter;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn rand_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn rand_mat(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Random correlation matrix `D^{-1/2} (B Bᵀ + I) D^{-1/2}`.
pub fn rand_corr(rng: &mut ChaCha8Rng, m: usize, spread: f64) -> DMatrix<f64> {
    let b = rand_mat(rng, m, spread);
    let s = &b * b.transpose() + DMatrix::identity(m, m);
    DMatrix::from_fn(m, m, |i, j| s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt())
}

/// Random valid parameters whose stationarity sum stays below `target` (∞-norm).
pub fn rand_params(rng: &mut ChaCha8Rng, order: ModelOrder, target: f64) -> GeneralParams<f64> {
    let m = order.m;
    let n_blocks = (order.r + order.s).max(1) as f64;
    let lambda: Vec<f64> = (0..order.r)
        .map(|_| rand_sign(rng) * rng.random_range(0.2..0.95))
        .collect();
    let gamma: Vec<f64> = (0..order.s).map(|_| rng.random_range(0.2..0.95)).collect();
    let phi: Vec<f64> = (0..order.s).map(|_| rng.random_range(0.1..3.0)).collect();
    let budget = target / n_blocks;
    let scaled = |g: DMatrix<f64>, denom: f64| {
        let inf = (0..m)
            .map(|i| g.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if inf > 0.0 {
            g * (budget * denom / inf)
        } else {
            g
        }
    };
    let g0 = lambda
        .iter()
        .map(|l| scaled(rand_mat(rng, m, 1.0), 1.0 - l.abs()))
        .collect();
    let mut g1 = Vec::new();
    let mut g2 = Vec::new();
    for &gm in &gamma {
        g1.push(scaled(rand_mat(rng, m, 1.0), 0.5 * (1.0 - gm)));
        g2.push(scaled(rand_mat(rng, m, 1.0), 0.5 * (1.0 - gm)));
    }
    let beta1 = rng.random_range(0.02..0.2);
    let beta2 = rng.random_range(0.3..(0.97 - beta1));
    let p = GeneralParams {
        order,
        omega_bar: DVector::from_fn(m, |_, _| rng.random_range(-0.5..1.5)),
        lambda,
        gamma,
        phi,
        g0,
        g1,
        g2,
        beta1,
        beta2,
        rbar: rand_corr(rng, m, 0.5),
    };
    p.validate().expect("random parameters are valid");
    p
}

/// `Φ_i` built directly from the eigen-decomposed form.
pub fn phi_direct(p: &GeneralParams<f64>, i: usize) -> DMatrix<f64> {
    let m = p.order.m;
    let e = (i - 1) as i32;
    let mut out = DMatrix::zeros(m, m);
    for k in 0..p.order.r {
        out += &p.g0[k] * p.lambda[k].powi(e);
    }
    for k in 0..p.order.s {
        let w = p.gamma[k].powi(e);
        let a = p.phi[k] * e as f64;
        out += &p.g1[k] * (w * a.cos()) + &p.g2[k] * (w * a.sin());
    }
    out
}

/// `ln h_t = ω̄ + Σ_{i=1}^{t} Φ_i ln y²_{t−i}` with nothing before the sample.
pub fn brute_log_h(p: &GeneralParams<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = y.shape();
    let phis: Vec<DMatrix<f64>> = (1..=n).map(|i| phi_direct(p, i)).collect();
    let ly = y.map(|v| (v * v).ln());
    let mut out = DMatrix::zeros(n, m);
    for t in 0..n {
        let mut lh = p.omega_bar.clone();
        for i in 1..=t {
            lh += &phis[i - 1] * ly.row(t - i).transpose();
        }
        out.set_row(t, &lh.transpose());
    }
    out
}

/// `Σ_t ½ (ln det H_t + y_tᵀ H_t⁻¹ y_t)` through dense matrices.
pub fn dense_neg_loglik(p: &GeneralParams<f64>, y: &DMatrix<f64>) -> f64 {
    let ly = y.map(|v| (v * v).ln());
    let vol = run_filter(p, &ly, y).expect("filter");
    let corr = run_corr_filter(p, &vol.eps, 1e-6).expect("corr filter");
    assert_eq!(corr.pd_repairs, 0, "oracle expects no repairs");
    let mut total = 0.0;
    for t in 0..y.nrows() {
        let d = DMatrix::from_diagonal(&vol.log_h.row(t).map(|x| (0.5 * x).exp()).transpose());
        let h = &d * &corr.r[t] * &d;
        let yt = y.row(t).transpose();
        let hinv = h.clone().try_inverse().expect("invertible H");
        total += 0.5 * ((yt.transpose() * hinv * &yt)[(0, 0)] + h.determinant().ln());
    }
    total
}

pub fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}
