//! Model orders, parameter containers and the flat packing used by the optimizer.
//!
//! The flat layout of the general parameter vector is
//!
//! ```text
//! ω̄ (m) | λ (r) | γ (s) | φ (s) | vec G0,1 .. vec G0,r | vec G1,1 .. | vec G2,1 .. | β1 | β2 | vech-below(R̄)
//! ```
//!
//! with `vec` column-stacking and the strict lower triangle of `R̄` stacked column by column.
//! The low-rank vector replaces each `vec G` block by its outer-product factors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{corr_from_vech_below, min_eigenvalue, vech_below, vech_below_pairs};
use crate::scalar::{lit, to_f64, Scalar};

/// Tolerance below which two eigenvalue parameters count as equal.
pub const DISTINCT_TOL: f64 = 1e-10;

/// Default interior margin for the strict inequalities of the parameter space.
pub const DEFAULT_MARGIN: f64 = 1e-6;

/// Orders of the model: asset count, real and complex-pair terms, and the Ψ window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelOrder {
    pub m: usize,
    pub r: usize,
    pub s: usize,
    pub k_window: usize,
}

impl ModelOrder {
    pub fn new(m: usize, r: usize, s: usize, k_window: usize) -> Result<Self> {
        let order = Self { m, r, s, k_window };
        order.validate()?;
        Ok(order)
    }

    /// Order with the smallest admissible window `k_window = m`.
    pub fn with_default_window(m: usize, r: usize, s: usize) -> Result<Self> {
        Self::new(m, r, s, m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::ConstraintViolation("m must be positive".into()));
        }
        if self.r + 2 * self.s > self.m {
            return Err(Error::ConstraintViolation(format!(
                "r + 2s = {} exceeds m = {}",
                self.r + 2 * self.s,
                self.m
            )));
        }
        if self.k_window < self.m {
            return Err(Error::ConstraintViolation(format!(
                "k_window = {} is smaller than m = {}",
                self.k_window, self.m
            )));
        }
        Ok(())
    }

    /// Number of eigenvalue terms `r + 2s`.
    pub fn n_terms(&self) -> usize {
        self.r + 2 * self.s
    }

    /// Dimension `d` of the general parameter vector.
    pub fn dim_general(&self) -> usize {
        let m = self.m;
        m + self.n_terms() * (1 + m * m) + m * (m - 1) / 2 + 2
    }

    /// Dimension `d*` of the low-rank parameter vector.
    pub fn dim_lowrank(&self) -> usize {
        let m = self.m;
        m + self.n_terms() + 2 * m * (self.r + 4 * self.s) + m * (m - 1) / 2 + 2
    }

    /// Length of the volatility block (everything before β1).
    pub fn dim_delta(&self) -> usize {
        self.m + self.n_terms() * (1 + self.m * self.m)
    }

    pub fn dim_delta_lowrank(&self) -> usize {
        self.m + self.n_terms() + 2 * self.m * (self.r + 4 * self.s)
    }

    /// Length of the correlation block (β1, β2, vech-below R̄).
    pub fn dim_beta(&self) -> usize {
        2 + self.m * (self.m - 1) / 2
    }

    pub fn layout(&self) -> Layout {
        let m = self.m;
        let (r, s) = (self.r, self.s);
        let mm = m * m;
        let omega = 0;
        let lambda = m;
        let gamma = lambda + r;
        let phi = gamma + s;
        let g0 = phi + s;
        let g1 = g0 + r * mm;
        let g2 = g1 + s * mm;
        let beta1 = g2 + s * mm;
        Layout {
            m,
            omega,
            lambda,
            gamma,
            phi,
            g0,
            g1,
            g2,
            beta1,
            beta2: beta1 + 1,
            rbar: beta1 + 2,
            len: beta1 + 2 + m * (m - 1) / 2,
        }
    }

    pub fn lowrank_layout(&self) -> LowRankLayout {
        let m = self.m;
        let (r, s) = (self.r, self.s);
        let lambda = m;
        let gamma = lambda + r;
        let phi = gamma + s;
        let g0 = phi + s;
        let g1 = g0 + 2 * m * r;
        let g2 = g1 + 4 * m * s;
        let beta1 = g2 + 4 * m * s;
        LowRankLayout {
            m,
            omega: 0,
            lambda,
            gamma,
            phi,
            g0,
            g1,
            g2,
            beta1,
            beta2: beta1 + 1,
            rbar: beta1 + 2,
            len: beta1 + 2 + m * (m - 1) / 2,
        }
    }
}

/// Start offsets of each block in the general flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub m: usize,
    pub omega: usize,
    pub lambda: usize,
    pub gamma: usize,
    pub phi: usize,
    pub g0: usize,
    pub g1: usize,
    pub g2: usize,
    pub beta1: usize,
    pub beta2: usize,
    pub rbar: usize,
    pub len: usize,
}

impl Layout {
    /// Flat index of entry `(i, j)` of `G0,k` (all zero-based).
    pub fn g0_entry(&self, k: usize, i: usize, j: usize) -> usize {
        self.g0 + k * self.m * self.m + j * self.m + i
    }
    pub fn g1_entry(&self, k: usize, i: usize, j: usize) -> usize {
        self.g1 + k * self.m * self.m + j * self.m + i
    }
    pub fn g2_entry(&self, k: usize, i: usize, j: usize) -> usize {
        self.g2 + k * self.m * self.m + j * self.m + i
    }
}

/// Start offsets of each block in the low-rank flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowRankLayout {
    pub m: usize,
    pub omega: usize,
    pub lambda: usize,
    pub gamma: usize,
    pub phi: usize,
    pub g0: usize,
    pub g1: usize,
    pub g2: usize,
    pub beta1: usize,
    pub beta2: usize,
    pub rbar: usize,
    pub len: usize,
}

impl LowRankLayout {
    /// Offset of factor `f` (0 or 1) of the `k`-th real term.
    pub fn g0_factor(&self, k: usize, f: usize) -> usize {
        self.g0 + (2 * k + f) * self.m
    }
    /// Offset of factor `f` (0..4) of the `k`-th complex term, block `G1`.
    pub fn g1_factor(&self, k: usize, f: usize) -> usize {
        self.g1 + (4 * k + f) * self.m
    }
    pub fn g2_factor(&self, k: usize, f: usize) -> usize {
        self.g2 + (4 * k + f) * self.m
    }
}

/// Interior margin η applied to the strict inequalities of the parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub margin: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
        }
    }
}

/// Parameters of the model without rank restrictions.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralParams<T: Scalar> {
    pub order: ModelOrder,
    pub omega_bar: DVector<T>,
    pub lambda: Vec<T>,
    pub gamma: Vec<T>,
    pub phi: Vec<T>,
    pub g0: Vec<DMatrix<T>>,
    pub g1: Vec<DMatrix<T>>,
    pub g2: Vec<DMatrix<T>>,
    pub beta1: T,
    pub beta2: T,
    pub rbar: DMatrix<T>,
}

fn check_scalar_blocks<T: Scalar>(
    lambda: &[T],
    gamma: &[T],
    phi: &[T],
    beta1: T,
    beta2: T,
    rbar: &DMatrix<T>,
    c: Constraints,
) -> Result<()> {
    let eta = c.margin;
    for (k, &l) in lambda.iter().enumerate() {
        let a = to_f64(l).abs();
        if !(a >= eta && a <= 1.0 - eta) {
            return Err(Error::ConstraintViolation(format!(
                "lambda[{k}] = {} must satisfy |lambda| in [{eta:e}, 1-{eta:e}]",
                to_f64(l)
            )));
        }
    }
    for (k, &g) in gamma.iter().enumerate() {
        let g = to_f64(g);
        if !(g >= eta && g <= 1.0 - eta) {
            return Err(Error::ConstraintViolation(format!(
                "gamma[{k}] = {g} must lie in [{eta:e}, 1-{eta:e}]"
            )));
        }
    }
    for (k, &p) in phi.iter().enumerate() {
        let p = to_f64(p);
        if !(p >= eta && p <= PI - eta) {
            return Err(Error::ConstraintViolation(format!(
                "phi[{k}] = {p} must lie in [{eta:e}, pi-{eta:e}]"
            )));
        }
    }
    check_distinct("lambda", lambda)?;
    check_distinct("gamma", gamma)?;
    let (b1, b2) = (to_f64(beta1), to_f64(beta2));
    if !(b1 >= 0.0 && b2 >= 0.0 && b1 <= 1.0 - eta && b2 <= 1.0 - eta && b1 + b2 <= 1.0 - eta) {
        return Err(Error::ConstraintViolation(format!(
            "beta1 = {b1}, beta2 = {b2} must be non-negative with beta1 + beta2 <= 1-{eta:e}"
        )));
    }
    let m = rbar.nrows();
    if rbar.ncols() != m {
        return Err(Error::DimensionMismatch {
            what: "Rbar columns",
            expected: m,
            found: rbar.ncols(),
        });
    }
    for i in 0..m {
        if rbar[(i, i)] != T::one() {
            return Err(Error::ConstraintViolation(format!(
                "Rbar[{i},{i}] must equal 1"
            )));
        }
        for j in 0..i {
            let x = to_f64(rbar[(i, j)]);
            if rbar[(i, j)] != rbar[(j, i)] {
                return Err(Error::ConstraintViolation(format!(
                    "Rbar must be symmetric at ({i},{j})"
                )));
            }
            if !(x > -1.0 && x < 1.0) {
                return Err(Error::ConstraintViolation(format!(
                    "Rbar[{i},{j}] = {x} must lie in (-1, 1)"
                )));
            }
        }
    }
    if m > 1 && !(min_eigenvalue(rbar) > T::zero()) {
        return Err(Error::ConstraintViolation(
            "Rbar must be positive definite".into(),
        ));
    }
    Ok(())
}

fn check_distinct<T: Scalar>(kind: &'static str, v: &[T]) -> Result<()> {
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if to_f64(v[i] - v[j]).abs() < DISTINCT_TOL {
                return Err(Error::DuplicateEigenvalue {
                    kind,
                    i,
                    j,
                    value: to_f64(v[i]),
                });
            }
        }
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

impl<T: Scalar> GeneralParams<T> {
    /// Checks every invariant of the parameter space with the given margin.
    pub fn validate_with(&self, c: Constraints) -> Result<()> {
        let o = self.order;
        o.validate()?;
        check_len("omega_bar", o.m, self.omega_bar.len())?;
        check_len("lambda", o.r, self.lambda.len())?;
        check_len("gamma", o.s, self.gamma.len())?;
        check_len("phi", o.s, self.phi.len())?;
        check_len("G0 blocks", o.r, self.g0.len())?;
        check_len("G1 blocks", o.s, self.g1.len())?;
        check_len("G2 blocks", o.s, self.g2.len())?;
        for g in self.g0.iter().chain(&self.g1).chain(&self.g2) {
            check_len("G rows", o.m, g.nrows())?;
            check_len("G columns", o.m, g.ncols())?;
        }
        check_len("Rbar rows", o.m, self.rbar.nrows())?;
        if let Some(bad) = self
            .omega_bar
            .iter()
            .chain(self.g0.iter().flat_map(|g| g.iter()))
            .chain(self.g1.iter().flat_map(|g| g.iter()))
            .chain(self.g2.iter().flat_map(|g| g.iter()))
            .find(|x| !x.is_finite())
        {
            return Err(Error::ConstraintViolation(format!(
                "non-finite coefficient {}",
                to_f64(*bad)
            )));
        }
        check_scalar_blocks(
            &self.lambda,
            &self.gamma,
            &self.phi,
            self.beta1,
            self.beta2,
            &self.rbar,
            c,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(Constraints::default())
    }

    /// Flat parameter vector in the documented packing order.
    pub fn pack(&self) -> DVector<T> {
        let mut v = Vec::with_capacity(self.order.dim_general());
        v.extend(self.omega_bar.iter().copied());
        v.extend(self.lambda.iter().copied());
        v.extend(self.gamma.iter().copied());
        v.extend(self.phi.iter().copied());
        for g in self.g0.iter().chain(&self.g1).chain(&self.g2) {
            v.extend(g.as_slice().iter().copied());
        }
        v.push(self.beta1);
        v.push(self.beta2);
        v.extend(vech_below(&self.rbar));
        DVector::from_vec(v)
    }

    /// Inverse of [`pack`](Self::pack); validates every invariant.
    pub fn unpack(v: &[T], order: ModelOrder) -> Result<Self> {
        Self::unpack_with(v, order, Constraints::default())
    }

    pub fn unpack_with(v: &[T], order: ModelOrder, c: Constraints) -> Result<Self> {
        let p = Self::unpack_unchecked(v, order)?;
        p.validate_with(c)?;
        Ok(p)
    }

    /// Unpacks without checking the parameter-space constraints (length is still checked).
    pub fn unpack_unchecked(v: &[T], order: ModelOrder) -> Result<Self> {
        order.validate()?;
        check_len("parameter vector", order.dim_general(), v.len())?;
        let l = order.layout();
        let m = order.m;
        let mm = m * m;
        let block = |start: usize, k: usize| DMatrix::from_column_slice(m, m, &v[start + k * mm..start + (k + 1) * mm]);
        Ok(Self {
            order,
            omega_bar: DVector::from_column_slice(&v[l.omega..l.lambda]),
            lambda: v[l.lambda..l.gamma].to_vec(),
            gamma: v[l.gamma..l.phi].to_vec(),
            phi: v[l.phi..l.g0].to_vec(),
            g0: (0..order.r).map(|k| block(l.g0, k)).collect(),
            g1: (0..order.s).map(|k| block(l.g1, k)).collect(),
            g2: (0..order.s).map(|k| block(l.g2, k)).collect(),
            beta1: v[l.beta1],
            beta2: v[l.beta2],
            rbar: corr_from_vech_below(m, &v[l.rbar..l.len]),
        })
    }

    /// Parameter set with no volatility dynamics: `ln h_t = ω̄` and `R_t = R̄`.
    pub fn constant(omega_bar: DVector<T>, rbar: DMatrix<T>, k_window: usize) -> Result<Self> {
        let m = omega_bar.len();
        let p = Self {
            order: ModelOrder::new(m, 0, 0, k_window)?,
            omega_bar,
            lambda: vec![],
            gamma: vec![],
            phi: vec![],
            g0: vec![],
            g1: vec![],
            g2: vec![],
            beta1: T::zero(),
            beta2: T::zero(),
            rbar,
        };
        p.validate()?;
        Ok(p)
    }

    /// Reorders eigenvalue blocks: λ descending (signed), complex triples descending by γ.
    pub fn canonicalize(&self) -> Result<Self> {
        let (perm_r, perm_s) = self.block_orders()?;
        let mut out = self.clone();
        out.lambda = perm_r.iter().map(|&k| self.lambda[k]).collect();
        out.g0 = perm_r.iter().map(|&k| self.g0[k].clone()).collect();
        out.gamma = perm_s.iter().map(|&k| self.gamma[k]).collect();
        out.phi = perm_s.iter().map(|&k| self.phi[k]).collect();
        out.g1 = perm_s.iter().map(|&k| self.g1[k].clone()).collect();
        out.g2 = perm_s.iter().map(|&k| self.g2[k].clone()).collect();
        Ok(out)
    }

    /// Flat-index permutation realizing [`canonicalize`](Self::canonicalize):
    /// `canonical.pack()[i] == self.pack()[perm[i]]`.
    pub fn canonical_permutation(&self) -> Result<Vec<usize>> {
        let (perm_r, perm_s) = self.block_orders()?;
        let o = self.order;
        let l = o.layout();
        let mm = o.m * o.m;
        let mut perm: Vec<usize> = (0..l.len).collect();
        for (new, &old) in perm_r.iter().enumerate() {
            perm[l.lambda + new] = l.lambda + old;
            for e in 0..mm {
                perm[l.g0 + new * mm + e] = l.g0 + old * mm + e;
            }
        }
        for (new, &old) in perm_s.iter().enumerate() {
            perm[l.gamma + new] = l.gamma + old;
            perm[l.phi + new] = l.phi + old;
            for e in 0..mm {
                perm[l.g1 + new * mm + e] = l.g1 + old * mm + e;
                perm[l.g2 + new * mm + e] = l.g2 + old * mm + e;
            }
        }
        Ok(perm)
    }

    fn block_orders(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        check_distinct("lambda", &self.lambda)?;
        check_distinct("gamma", &self.gamma)?;
        let mut perm_r: Vec<usize> = (0..self.lambda.len()).collect();
        perm_r.sort_by(|&a, &b| {
            self.lambda[b]
                .partial_cmp(&self.lambda[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut perm_s: Vec<usize> = (0..self.gamma.len()).collect();
        perm_s.sort_by(|&a, &b| {
            self.gamma[b]
                .partial_cmp(&self.gamma[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok((perm_r, perm_s))
    }

    /// Φ₁ = Σ G0,k + Σ G1,k.
    pub fn phi1(&self) -> DMatrix<T> {
        let m = self.order.m;
        let mut out = DMatrix::zeros(m, m);
        for g in self.g0.iter().chain(&self.g1) {
            out += g;
        }
        out
    }

    /// Converts the scalar type (e.g. `f64` to `f32`).
    pub fn cast<U: Scalar>(&self) -> GeneralParams<U> {
        let c = |x: T| lit::<U>(to_f64(x));
        let cm = |a: &DMatrix<T>| a.map(c);
        GeneralParams {
            order: self.order,
            omega_bar: self.omega_bar.map(c),
            lambda: self.lambda.iter().map(|&x| c(x)).collect(),
            gamma: self.gamma.iter().map(|&x| c(x)).collect(),
            phi: self.phi.iter().map(|&x| c(x)).collect(),
            g0: self.g0.iter().map(cm).collect(),
            g1: self.g1.iter().map(cm).collect(),
            g2: self.g2.iter().map(cm).collect(),
            beta1: c(self.beta1),
            beta2: c(self.beta2),
            rbar: cm(&self.rbar),
        }
    }
}

/// Parameters of the model with rank-restricted coefficient matrices.
///
/// `G0,k = a bᵀ` from `g0_factors[k] = [a, b]`; `G1,k = f0 f1ᵀ + f2 f3ᵀ` from
/// `g1_factors[k] = [f0, f1, f2, f3]`, and likewise for `G2,k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankParams<T: Scalar> {
    pub order: ModelOrder,
    pub omega_bar: DVector<T>,
    pub lambda: Vec<T>,
    pub gamma: Vec<T>,
    pub phi: Vec<T>,
    pub g0_factors: Vec<[DVector<T>; 2]>,
    pub g1_factors: Vec<[DVector<T>; 4]>,
    pub g2_factors: Vec<[DVector<T>; 4]>,
    pub beta1: T,
    pub beta2: T,
    pub rbar: DMatrix<T>,
}

impl<T: Scalar> LowRankParams<T> {
    pub fn validate_with(&self, c: Constraints) -> Result<()> {
        let o = self.order;
        o.validate()?;
        check_len("omega_bar", o.m, self.omega_bar.len())?;
        check_len("lambda", o.r, self.lambda.len())?;
        check_len("gamma", o.s, self.gamma.len())?;
        check_len("phi", o.s, self.phi.len())?;
        check_len("G0 factor pairs", o.r, self.g0_factors.len())?;
        check_len("G1 factor quadruples", o.s, self.g1_factors.len())?;
        check_len("G2 factor quadruples", o.s, self.g2_factors.len())?;
        for f in self
            .g0_factors
            .iter()
            .flat_map(|p| p.iter())
            .chain(self.g1_factors.iter().flat_map(|q| q.iter()))
            .chain(self.g2_factors.iter().flat_map(|q| q.iter()))
        {
            check_len("factor length", o.m, f.len())?;
        }
        check_len("Rbar rows", o.m, self.rbar.nrows())?;
        check_scalar_blocks(
            &self.lambda,
            &self.gamma,
            &self.phi,
            self.beta1,
            self.beta2,
            &self.rbar,
            c,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(Constraints::default())
    }

    /// Dimension `d*` of the factor vector.
    pub fn dim(&self) -> usize {
        self.order.dim_lowrank()
    }

    pub fn pack(&self) -> DVector<T> {
        let mut v = Vec::with_capacity(self.order.dim_lowrank());
        v.extend(self.omega_bar.iter().copied());
        v.extend(self.lambda.iter().copied());
        v.extend(self.gamma.iter().copied());
        v.extend(self.phi.iter().copied());
        for f in self
            .g0_factors
            .iter()
            .flat_map(|p| p.iter())
            .chain(self.g1_factors.iter().flat_map(|q| q.iter()))
            .chain(self.g2_factors.iter().flat_map(|q| q.iter()))
        {
            v.extend(f.iter().copied());
        }
        v.push(self.beta1);
        v.push(self.beta2);
        v.extend(vech_below(&self.rbar));
        DVector::from_vec(v)
    }

    pub fn unpack(v: &[T], order: ModelOrder) -> Result<Self> {
        let p = Self::unpack_unchecked(v, order)?;
        p.validate()?;
        Ok(p)
    }

    pub fn unpack_unchecked(v: &[T], order: ModelOrder) -> Result<Self> {
        order.validate()?;
        check_len("low-rank parameter vector", order.dim_lowrank(), v.len())?;
        let l = order.lowrank_layout();
        let m = order.m;
        let vecat = |start: usize| DVector::from_column_slice(&v[start..start + m]);
        Ok(Self {
            order,
            omega_bar: DVector::from_column_slice(&v[0..m]),
            lambda: v[l.lambda..l.gamma].to_vec(),
            gamma: v[l.gamma..l.phi].to_vec(),
            phi: v[l.phi..l.g0].to_vec(),
            g0_factors: (0..order.r)
                .map(|k| [vecat(l.g0_factor(k, 0)), vecat(l.g0_factor(k, 1))])
                .collect(),
            g1_factors: (0..order.s)
                .map(|k| std::array::from_fn(|f| vecat(l.g1_factor(k, f))))
                .collect(),
            g2_factors: (0..order.s)
                .map(|k| std::array::from_fn(|f| vecat(l.g2_factor(k, f))))
                .collect(),
            beta1: v[l.beta1],
            beta2: v[l.beta2],
            rbar: corr_from_vech_below(m, &v[l.rbar..l.len]),
        })
    }

    /// The general parameters θ(ϑ) implied by the factors.
    pub fn to_general(&self) -> GeneralParams<T> {
        let pair = |a: &DVector<T>, b: &DVector<T>| a * b.transpose();
        GeneralParams {
            order: self.order,
            omega_bar: self.omega_bar.clone(),
            lambda: self.lambda.clone(),
            gamma: self.gamma.clone(),
            phi: self.phi.clone(),
            g0: self.g0_factors.iter().map(|[a, b]| pair(a, b)).collect(),
            g1: self
                .g1_factors
                .iter()
                .map(|q| pair(&q[0], &q[1]) + pair(&q[2], &q[3]))
                .collect(),
            g2: self
                .g2_factors
                .iter()
                .map(|q| pair(&q[0], &q[1]) + pair(&q[2], &q[3]))
                .collect(),
            beta1: self.beta1,
            beta2: self.beta2,
            rbar: self.rbar.clone(),
        }
    }

    /// Jacobian Δ = ∂θ/∂ϑᵀ of the factor map, a `d × d*` matrix.
    pub fn jacobian(&self) -> DMatrix<T> {
        let o = self.order;
        let m = o.m;
        let gl = o.layout();
        let ll = o.lowrank_layout();
        let mut jac = DMatrix::zeros(gl.len, ll.len);
        for i in 0..m {
            jac[(gl.omega + i, ll.omega + i)] = T::one();
        }
        for k in 0..o.r {
            jac[(gl.lambda + k, ll.lambda + k)] = T::one();
        }
        for k in 0..o.s {
            jac[(gl.gamma + k, ll.gamma + k)] = T::one();
            jac[(gl.phi + k, ll.phi + k)] = T::one();
        }
        // d vec(a bᵀ) / da = b ⊗ I, d vec(a bᵀ) / db = I ⊗ a
        let mut outer_block = |row0: usize, col_a: usize, col_b: usize, a: &DVector<T>, b: &DVector<T>| {
            for j in 0..m {
                for i in 0..m {
                    let row = row0 + j * m + i;
                    jac[(row, col_a + i)] += b[j];
                    jac[(row, col_b + j)] += a[i];
                }
            }
        };
        for (k, [a, b]) in self.g0_factors.iter().enumerate() {
            outer_block(gl.g0 + k * m * m, ll.g0_factor(k, 0), ll.g0_factor(k, 1), a, b);
        }
        for (k, q) in self.g1_factors.iter().enumerate() {
            let row0 = gl.g1 + k * m * m;
            outer_block(row0, ll.g1_factor(k, 0), ll.g1_factor(k, 1), &q[0], &q[1]);
            outer_block(row0, ll.g1_factor(k, 2), ll.g1_factor(k, 3), &q[2], &q[3]);
        }
        for (k, q) in self.g2_factors.iter().enumerate() {
            let row0 = gl.g2 + k * m * m;
            outer_block(row0, ll.g2_factor(k, 0), ll.g2_factor(k, 1), &q[0], &q[1]);
            outer_block(row0, ll.g2_factor(k, 2), ll.g2_factor(k, 3), &q[2], &q[3]);
        }
        let nb = o.dim_beta();
        for e in 0..nb {
            jac[(gl.beta1 + e, ll.beta1 + e)] = T::one();
        }
        jac
    }

    /// Rescales every factor pair so the left factor has unit norm and a
    /// nonnegative first nonzero entry; θ(ϑ) is unchanged.
    pub fn normalized(&self) -> Self {
        fn fix<T: Scalar>(a: &mut DVector<T>, b: &mut DVector<T>) {
            let norm = a.norm();
            if norm == T::zero() {
                return;
            }
            let sign = match a.iter().find(|x| **x != T::zero()) {
                Some(&x) if x < T::zero() => -T::one(),
                _ => T::one(),
            };
            let c = sign / norm;
            *a *= c;
            *b *= T::one() / c;
        }
        let mut out = self.clone();
        for [a, b] in out.g0_factors.iter_mut() {
            fix(a, b);
        }
        for q in out.g1_factors.iter_mut().chain(out.g2_factors.iter_mut()) {
            let (first, second) = q.split_at_mut(2);
            let (a, b) = first.split_at_mut(1);
            fix(&mut a[0], &mut b[0]);
            let (c, d) = second.split_at_mut(1);
            fix(&mut c[0], &mut d[0]);
        }
        out
    }

    /// Applies the canonical eigenvalue ordering, permuting factors in lockstep.
    pub fn canonicalize(&self) -> Result<Self> {
        let (perm_r, perm_s) = self.to_general_scalars_only().block_orders()?;
        let mut out = self.clone();
        out.lambda = perm_r.iter().map(|&k| self.lambda[k]).collect();
        out.g0_factors = perm_r.iter().map(|&k| self.g0_factors[k].clone()).collect();
        out.gamma = perm_s.iter().map(|&k| self.gamma[k]).collect();
        out.phi = perm_s.iter().map(|&k| self.phi[k]).collect();
        out.g1_factors = perm_s.iter().map(|&k| self.g1_factors[k].clone()).collect();
        out.g2_factors = perm_s.iter().map(|&k| self.g2_factors[k].clone()).collect();
        Ok(out)
    }

    fn to_general_scalars_only(&self) -> GeneralParams<T> {
        GeneralParams {
            order: self.order,
            omega_bar: self.omega_bar.clone(),
            lambda: self.lambda.clone(),
            gamma: self.gamma.clone(),
            phi: self.phi.clone(),
            g0: vec![],
            g1: vec![],
            g2: vec![],
            beta1: self.beta1,
            beta2: self.beta2,
            rbar: self.rbar.clone(),
        }
    }
}

/// Serialized form of a general parameter set: flat fields in pack order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralParamsFile {
    pub order: ModelOrder,
    pub omega_bar: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub phi: Vec<f64>,
    /// Column-stacked `vec(G0,k)` for each k.
    pub g0: Vec<Vec<f64>>,
    pub g1: Vec<Vec<f64>>,
    pub g2: Vec<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    /// Strict lower triangle of R̄, column by column.
    pub rbar: Vec<f64>,
}

impl<T: Scalar> From<&GeneralParams<T>> for GeneralParamsFile {
    fn from(p: &GeneralParams<T>) -> Self {
        let f = |v: &[T]| v.iter().map(|&x| to_f64(x)).collect::<Vec<_>>();
        Self {
            order: p.order,
            omega_bar: f(p.omega_bar.as_slice()),
            lambda: f(&p.lambda),
            gamma: f(&p.gamma),
            phi: f(&p.phi),
            g0: p.g0.iter().map(|g| f(g.as_slice())).collect(),
            g1: p.g1.iter().map(|g| f(g.as_slice())).collect(),
            g2: p.g2.iter().map(|g| f(g.as_slice())).collect(),
            beta1: to_f64(p.beta1),
            beta2: to_f64(p.beta2),
            rbar: vech_below(&p.rbar).into_iter().map(to_f64).collect(),
        }
    }
}

impl GeneralParamsFile {
    /// Flat vector in pack order.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(&self.omega_bar);
        v.extend(&self.lambda);
        v.extend(&self.gamma);
        v.extend(&self.phi);
        for g in self.g0.iter().chain(&self.g1).chain(&self.g2) {
            v.extend(g);
        }
        v.push(self.beta1);
        v.push(self.beta2);
        v.extend(&self.rbar);
        v
    }

    pub fn to_params<T: Scalar>(&self) -> Result<GeneralParams<T>> {
        let flat: Vec<T> = self.flat().into_iter().map(lit::<T>).collect();
        GeneralParams::unpack(&flat, self.order)
    }
}

/// Serialized form of a low-rank parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowRankParamsFile {
    pub order: ModelOrder,
    /// Flat ϑ in low-rank pack order.
    pub vartheta: Vec<f64>,
}

impl<T: Scalar> From<&LowRankParams<T>> for LowRankParamsFile {
    fn from(p: &LowRankParams<T>) -> Self {
        Self {
            order: p.order,
            vartheta: p.pack().iter().map(|&x| to_f64(x)).collect(),
        }
    }
}

impl LowRankParamsFile {
    pub fn to_params<T: Scalar>(&self) -> Result<LowRankParams<T>> {
        let flat: Vec<T> = self.vartheta.iter().map(|&x| lit::<T>(x)).collect();
        LowRankParams::unpack(&flat, self.order)
    }
}

impl<T: Scalar> Serialize for GeneralParams<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GeneralParamsFile::from(self).serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for GeneralParams<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = GeneralParamsFile::deserialize(d)?;
        file.to_params().map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> Serialize for LowRankParams<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LowRankParamsFile::from(self).serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for LowRankParams<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = LowRankParamsFile::deserialize(d)?;
        file.to_params().map_err(serde::de::Error::custom)
    }
}

/// Pairs `(i, j)` with `i > j` in the order R̄'s free entries are packed.
pub fn rbar_pairs(m: usize) -> Vec<(usize, usize)> {
    vech_below_pairs(m)
}
