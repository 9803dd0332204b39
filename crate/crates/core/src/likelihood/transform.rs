//! Smooth bijections between the constrained parameter space and ℝᵈ.
//!
//! * `λ_k = σ_k (η + (1 − 2η) logistic(u))` with the sign `σ_k` fixed per run
//! * `γ_k = η + (1 − 2η) logistic(u)`, `φ_k = η + (π − 2η) logistic(u)`
//! * `(β₁, β₂) = (1 − η) softmax(u₁, u₂, 0)[..2]`
//! * `R̄ = L Lᵀ` with `L` built row by row from `z = c·tanh(u)`, `c` just below one (hyperspherical Cholesky)
//!
//! Everything else (ω̄, G entries or factors) is left untouched.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::params::ModelOrder;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    General,
    LowRank,
}

/// Map from unconstrained coordinates `u` to a flat θ or ϑ.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub order: ModelOrder,
    pub kind: TransformKind,
    /// `+1` or `−1` for each real eigenvalue term.
    pub lambda_signs: Vec<f64>,
    pub margin: f64,
}

fn logistic<T: Scalar>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

fn logit<T: Scalar>(p: T) -> T {
    let tiny: T = lit(1e-15);
    let p = p.clamp(tiny, T::one() - tiny);
    (p / (T::one() - p)).ln()
}

impl Transform {
    pub fn new(order: ModelOrder, kind: TransformKind, lambda_signs: Vec<f64>, margin: f64) -> Self {
        assert_eq!(lambda_signs.len(), order.r, "one sign per real term");
        Self {
            order,
            kind,
            lambda_signs,
            margin,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            TransformKind::General => self.order.dim_general(),
            TransformKind::LowRank => self.order.dim_lowrank(),
        }
    }

    fn beta_offset(&self) -> usize {
        match self.kind {
            TransformKind::General => self.order.dim_delta(),
            TransformKind::LowRank => self.order.dim_delta_lowrank(),
        }
    }

    fn eig_offsets(&self) -> (usize, usize, usize) {
        let o = self.order;
        (o.m, o.m + o.r, o.m + o.r + o.s)
    }

    /// Flat parameters from unconstrained coordinates.
    pub fn to_params<T: Scalar>(&self, u: &DVector<T>) -> DVector<T> {
        let mut th = u.clone();
        let eta: T = lit(self.margin);
        let span = T::one() - eta - eta;
        let pspan = T::pi() - eta - eta;
        let (lam, gam, phi) = self.eig_offsets();
        for k in 0..self.order.r {
            th[lam + k] = lit::<T>(self.lambda_signs[k]) * (eta + span * logistic(u[lam + k]));
        }
        for k in 0..self.order.s {
            th[gam + k] = eta + span * logistic(u[gam + k]);
            th[phi + k] = eta + pspan * logistic(u[phi + k]);
        }
        let b = self.beta_offset();
        let (p1, p2) = softmax3(u[b], u[b + 1]);
        let scale = T::one() - eta;
        th[b] = scale * p1;
        th[b + 1] = scale * p2;
        let m = self.order.m;
        let l = cpc_factor(m, &u.as_slice()[b + 2..]);
        let pairs = crate::linalg::vech_below_pairs(m);
        for (e, &(i, j)) in pairs.iter().enumerate() {
            th[b + 2 + e] = row_dot(&l, i, j);
        }
        th
    }

    /// Unconstrained coordinates of a valid flat parameter vector.
    pub fn from_params<T: Scalar>(&self, th: &DVector<T>) -> DVector<T> {
        let mut u = th.clone();
        let eta: T = lit(self.margin);
        let span = T::one() - eta - eta;
        let pspan = T::pi() - eta - eta;
        let (lam, gam, phi) = self.eig_offsets();
        for k in 0..self.order.r {
            u[lam + k] = logit((th[lam + k].abs() - eta) / span);
        }
        for k in 0..self.order.s {
            u[gam + k] = logit((th[gam + k] - eta) / span);
            u[phi + k] = logit((th[phi + k] - eta) / pspan);
        }
        let b = self.beta_offset();
        let scale = T::one() - eta;
        let floor: T = lit(1e-10);
        let p1 = (th[b] / scale).max(floor);
        let p2 = (th[b + 1] / scale).max(floor);
        let p0 = (T::one() - p1 - p2).max(floor);
        u[b] = (p1 / p0).ln();
        u[b + 1] = (p2 / p0).ln();
        let m = self.order.m;
        let rbar = crate::linalg::corr_from_vech_below(m, &th.as_slice()[b + 2..]);
        let l = rbar
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(|| DMatrix::identity(m, m));
        let pairs = crate::linalg::vech_below_pairs(m);
        let lim: T = lit(ZMAX * (1.0 - 1e-12));
        for (e, &(i, j)) in pairs.iter().enumerate() {
            let mut rem = T::one();
            for k in 0..j {
                rem -= l[(i, k)] * l[(i, k)];
            }
            let z = (l[(i, j)] / rem.max(lit(1e-300)).sqrt()).clamp(-lim, lim);
            u[b + 2 + e] = (z / lit(ZMAX)).atanh();
        }
        u
    }

    /// `Jᵀ g`: the gradient with respect to `u` given the gradient with respect to the parameters.
    pub fn pullback<T: Scalar>(&self, u: &DVector<T>, g: &DVector<T>) -> DVector<T> {
        let mut out = g.clone();
        let eta: T = lit(self.margin);
        let span = T::one() - eta - eta;
        let pspan = T::pi() - eta - eta;
        let (lam, gam, phi) = self.eig_offsets();
        for k in 0..self.order.r {
            let s = logistic(u[lam + k]);
            out[lam + k] = g[lam + k] * lit::<T>(self.lambda_signs[k]) * span * s * (T::one() - s);
        }
        for k in 0..self.order.s {
            let s = logistic(u[gam + k]);
            out[gam + k] = g[gam + k] * span * s * (T::one() - s);
            let s = logistic(u[phi + k]);
            out[phi + k] = g[phi + k] * pspan * s * (T::one() - s);
        }
        let b = self.beta_offset();
        let (p1, p2) = softmax3(u[b], u[b + 1]);
        let scale = T::one() - eta;
        let (g1, g2) = (g[b], g[b + 1]);
        out[b] = scale * (g1 * p1 * (T::one() - p1) - g2 * p2 * p1);
        out[b + 1] = scale * (-g1 * p1 * p2 + g2 * p2 * (T::one() - p2));
        let m = self.order.m;
        let ur = &u.as_slice()[b + 2..];
        let gr = &g.as_slice()[b + 2..];
        let jac = cpc_jacobian(m, ur);
        let pulled = jac.transpose() * DVector::from_column_slice(gr);
        for (e, v) in pulled.iter().enumerate() {
            out[b + 2 + e] = *v;
        }
        out
    }

    /// Dense Jacobian ∂θ/∂u (for tests and diagnostics).
    pub fn jacobian<T: Scalar>(&self, u: &DVector<T>) -> DMatrix<T> {
        let d = u.len();
        let mut j = DMatrix::zeros(d, d);
        for c in 0..d {
            let mut e = DVector::zeros(d);
            e[c] = T::one();
            let col = self.pullback(u, &e);
            j.row_mut(c).copy_from(&col.transpose());
        }
        j
    }
}

fn softmax3<T: Scalar>(u1: T, u2: T) -> (T, T) {
    let mx = u1.max(u2).max(T::zero());
    let (e0, e1, e2) = ((-mx).exp(), (u1 - mx).exp(), (u2 - mx).exp());
    let den = e0 + e1 + e2;
    (e1 / den, e2 / den)
}

/// Bound on the partial correlations, so saturated `tanh` still gives a PD `R̄`.
const ZMAX: f64 = 0.999;

fn row_dot<T: Scalar>(l: &DMatrix<T>, i: usize, j: usize) -> T {
    let mut acc = T::zero();
    for k in 0..=j.min(i) {
        acc += l[(i, k)] * l[(j, k)];
    }
    acc
}

/// Lower-triangular factor with unit-norm rows from `u` in vech-below order.
fn cpc_factor<T: Scalar>(m: usize, u: &[T]) -> DMatrix<T> {
    let z = pair_matrix(m, u, |x| lit::<T>(ZMAX) * x.tanh());
    let mut l = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut rem = T::one();
        for j in 0..i {
            let v = z[(i, j)] * rem.sqrt();
            l[(i, j)] = v;
            rem -= v * v;
        }
        l[(i, i)] = rem.max(T::zero()).sqrt();
    }
    l
}

fn pair_matrix<T: Scalar>(m: usize, u: &[T], f: impl Fn(T) -> T) -> DMatrix<T> {
    let mut z = DMatrix::zeros(m, m);
    for (e, &(i, j)) in crate::linalg::vech_below_pairs(m).iter().enumerate() {
        z[(i, j)] = f(u[e]);
    }
    z
}

/// ∂ vech-below(R̄) / ∂u.
fn cpc_jacobian<T: Scalar>(m: usize, u: &[T]) -> DMatrix<T> {
    let pairs = crate::linalg::vech_below_pairs(m);
    let np = pairs.len();
    let th = pair_matrix(m, u, |x| x.tanh());
    let z = th.map(|x| lit::<T>(ZMAX) * x);
    let l = cpc_factor(m, u);
    let index = |i: usize, j: usize| pairs.iter().position(|&p| p == (i, j)).expect("pair");
    let mut jac = DMatrix::zeros(np, np);
    let half: T = lit(0.5);
    for (col, &(a, b)) in pairs.iter().enumerate() {
        // only row a of L moves
        let mut dl = vec![T::zero(); m];
        let mut rem = T::one();
        let mut drem = T::zero();
        for j in 0..a {
            let sq = rem.sqrt();
            let dz = if j == b {
                lit::<T>(ZMAX) * (T::one() - th[(a, j)] * th[(a, j)])
            } else {
                T::zero()
            };
            let v = z[(a, j)] * sq;
            let dv = dz * sq + z[(a, j)] * drem * half / sq;
            dl[j] = dv;
            rem -= v * v;
            drem -= lit::<T>(2.0) * v * dv;
        }
        dl[a] = if rem > T::zero() { drem * half / rem.sqrt() } else { T::zero() };
        for j in 0..a {
            let mut acc = T::zero();
            for k in 0..=j {
                acc += dl[k] * l[(j, k)];
            }
            jac[(index(a, j), col)] = acc;
        }
        for i in a + 1..m {
            let mut acc = T::zero();
            for k in 0..=a {
                acc += l[(i, k)] * dl[k];
            }
            jac[(index(i, a), col)] = acc;
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::GeneralParams;
    use crate::simulate::{dgp_catalog, Dgp};
    use approx::assert_relative_eq;

    fn sample_u(d: usize) -> DVector<f64> {
        DVector::from_fn(d, |i, _| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0)
    }

    #[test]
    fn round_trip_through_unconstrained_space() {
        let p = dgp_catalog(Dgp::Dgp4, 0).unwrap();
        let tr = Transform::new(p.order, TransformKind::General, vec![1.0], 1e-6);
        let th = p.pack();
        let u = tr.from_params(&th);
        let back = tr.to_params(&u);
        assert_relative_eq!(back, th, epsilon = 1e-12);
        let p2 = dgp_catalog(Dgp::Dgp2, 0).unwrap();
        let tr = Transform::new(p2.order, TransformKind::General, vec![1.0, -1.0], 1e-6);
        let back = tr.to_params(&tr.from_params(&p2.pack()));
        assert_relative_eq!(back, p2.pack(), epsilon = 1e-12);
    }

    #[test]
    fn every_u_maps_into_the_parameter_space() {
        let o = ModelOrder::new(4, 1, 1, 4).unwrap();
        let tr = Transform::new(o, TransformKind::General, vec![-1.0], 1e-6);
        for scale in [0.1, 1.0, 10.0, 40.0] {
            let u = sample_u(o.dim_general()) * scale;
            let th = tr.to_params(&u);
            GeneralParams::unpack(th.as_slice(), o).unwrap();
        }
    }

    #[test]
    fn pullback_matches_finite_differences() {
        for kind in [TransformKind::General, TransformKind::LowRank] {
            let o = ModelOrder::new(4, 1, 1, 4).unwrap();
            let tr = Transform::new(o, kind, vec![-1.0], 1e-6);
            let u = sample_u(tr.dim());
            let jac = tr.jacobian(&u);
            let h = 1e-6;
            for c in 0..u.len() {
                let mut a = u.clone();
                let mut b = u.clone();
                a[c] += h;
                b[c] -= h;
                let fd = (tr.to_params(&a) - tr.to_params(&b)) / (2.0 * h);
                for r in 0..u.len() {
                    assert!((jac[(r, c)] - fd[r]).abs() < 1e-8, "{kind:?} ({r},{c}): {} vs {}", jac[(r, c)], fd[r]);
                }
            }
        }
    }
}
