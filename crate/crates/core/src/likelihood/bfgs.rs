//! BFGS with a strong-Wolfe line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence when the max-abs gradient entry falls below this.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome<T: Scalar> {
    pub x: DVector<T>,
    pub f: T,
    pub grad: DVector<T>,
    pub iterations: usize,
    pub n_evals: usize,
    pub converged: bool,
    pub message: String,
}

fn inf_norm<T: Scalar>(g: &DVector<T>) -> f64 {
    g.iter().fold(0.0, |a, &x| a.max(to_f64(x).abs()))
}

struct Point<T: Scalar> {
    a: T,
    f: T,
    g: DVector<T>,
    slope: T,
}

/// Minimizes `f`, which returns `None` where the objective is undefined.
pub fn minimize<T, F>(mut f: F, x0: DVector<T>, opts: &BfgsOptions) -> BfgsOutcome<T>
where
    T: Scalar,
    F: FnMut(&DVector<T>) -> Option<(T, DVector<T>)>,
{
    let d = x0.len();
    let mut n_evals = 1;
    let (mut fx, mut gx) = match f(&x0) {
        Some(v) => v,
        None => {
            return BfgsOutcome {
                x: x0,
                f: T::max_value().unwrap(),
                grad: DVector::zeros(d),
                iterations: 0,
                n_evals,
                converged: false,
                message: "objective undefined at the starting point".into(),
            }
        }
    };
    let mut x = x0;
    let mut hinv = DMatrix::<T>::identity(d, d);
    let mut fresh = true;
    let mut message = String::from("iteration limit reached");
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if inf_norm(&gx) < opts.grad_tol {
            converged = true;
            message = "gradient tolerance reached".into();
            break;
        }
        let mut dir = -(&hinv * &gx);
        if gx.dot(&dir) >= T::zero() {
            hinv = DMatrix::identity(d, d);
            fresh = true;
            dir = -gx.clone();
        }
        let a0 = if fresh {
            T::one().min(T::one() / lit::<T>(inf_norm(&gx).max(1e-12)))
        } else {
            T::one()
        };
        let found = line_search(&mut f, &x, fx, &gx, &dir, a0, opts, &mut n_evals);
        let Some(pt) = found else {
            if fresh {
                message = "line search failed".into();
                break;
            }
            hinv = DMatrix::identity(d, d);
            fresh = true;
            continue;
        };
        iterations += 1;
        let s = &dir * pt.a;
        let y = &pt.g - &gx;
        let sy = s.dot(&y);
        let f_old = fx;
        x += &s;
        fx = pt.f;
        gx = pt.g;
        if sy > lit::<T>(1e-12) * s.norm() * y.norm() {
            if fresh {
                hinv = DMatrix::identity(d, d) * (sy / y.dot(&y));
            }
            let rho = T::one() / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            let coef = rho * rho * yhy + rho;
            hinv.ger(-rho, &hy, &s, T::one());
            hinv.ger(-rho, &s, &hy, T::one());
            hinv.ger(coef, &s, &s, T::one());
            fresh = false;
        }
        let tiny = lit::<T>(1e-15) * (T::one() + fx.abs());
        if (f_old - fx).abs() <= tiny && inf_norm(&gx) < opts.grad_tol * 10.0 {
            converged = inf_norm(&gx) < opts.grad_tol;
            message = if converged {
                "gradient tolerance reached".into()
            } else {
                "no further progress possible".into()
            };
            break;
        }
    }
    if !converged && inf_norm(&gx) < opts.grad_tol {
        converged = true;
        message = "gradient tolerance reached".into();
    }
    BfgsOutcome {
        x,
        f: fx,
        grad: gx,
        iterations,
        n_evals,
        converged,
        message,
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<T, F>(
    f: &mut F,
    x: &DVector<T>,
    f0: T,
    g0: &DVector<T>,
    dir: &DVector<T>,
    a_init: T,
    opts: &BfgsOptions,
    n_evals: &mut usize,
) -> Option<Point<T>>
where
    T: Scalar,
    F: FnMut(&DVector<T>) -> Option<(T, DVector<T>)>,
{
    let c1: T = lit(opts.c1);
    let c2: T = lit(opts.c2);
    let slope0 = g0.dot(dir);
    let mut eval = |a: T, n_evals: &mut usize| -> Option<Point<T>> {
        *n_evals += 1;
        let (fa, ga) = f(&(x + dir * a))?;
        if !fa.is_finite() {
            return None;
        }
        let slope = ga.dot(dir);
        Some(Point { a, f: fa, g: ga, slope })
    };
    let armijo = |p: &Point<T>| p.f <= f0 + c1 * p.a * slope0;
    let curvature = |p: &Point<T>| p.slope.abs() <= -c2 * slope0;

    let mut lo = Point {
        a: T::zero(),
        f: f0,
        g: g0.clone(),
        slope: slope0,
    };
    let mut a = a_init;
    let mut hi_a: Option<T> = None;
    let mut hi_f = T::zero();
    let mut best: Option<Point<T>> = None;
    for _ in 0..opts.max_line_search {
        if let Some(ha) = hi_a {
            // zoom: safeguarded quadratic interpolation inside (lo, hi)
            let (la, lf, ls) = (lo.a, lo.f, lo.slope);
            let width = ha - la;
            let mut trial = la + width * lit(0.5);
            if hi_f.is_finite() {
                let denom = lit::<T>(2.0) * (hi_f - lf - ls * width);
                if denom > T::zero() {
                    trial = la - ls * width * width / denom;
                }
            }
            let lo_b = la + width * lit(0.1);
            let hi_b = ha - width * lit(0.1);
            let (lo_b, hi_b) = if lo_b <= hi_b { (lo_b, hi_b) } else { (hi_b, lo_b) };
            a = trial.clamp(lo_b, hi_b);
            if (to_f64(width)).abs() < 1e-16 {
                break;
            }
        }
        match eval(a, n_evals) {
            None => {
                hi_a = Some(a);
                hi_f = T::max_value().unwrap();
                if hi_a.is_some() && lo.a == T::zero() && to_f64(a) < 1e-20 {
                    break;
                }
            }
            Some(p) => {
                if !armijo(&p) || (p.f >= lo.f && p.a != lo.a) {
                    hi_a = Some(p.a);
                    hi_f = p.f;
                } else {
                    if curvature(&p) {
                        return Some(p);
                    }
                    if let Some(ha) = hi_a {
                        if p.slope * (ha - lo.a) >= T::zero() {
                            hi_a = Some(lo.a);
                            hi_f = lo.f;
                        }
                    } else if p.slope >= T::zero() {
                        hi_a = Some(lo.a);
                        hi_f = lo.f;
                    }
                    let expand = hi_a.is_none();
                    lo = Point {
                        a: p.a,
                        f: p.f,
                        g: p.g.clone(),
                        slope: p.slope,
                    };
                    if best.as_ref().is_none_or(|b| p.f < b.f) {
                        best = Some(p);
                    }
                    if expand {
                        a = lo.a * lit(2.0);
                    }
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            Some((v, g))
        };
        let out = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), &BfgsOptions::default());
        assert!(out.converged, "{}", out.message);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_with_undefined_region() {
        // undefined for x0 > 2; minimum at (1, −3)
        let f = |x: &DVector<f64>| {
            if x[0] > 2.0 {
                return None;
            }
            let v = (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 3.0).powi(2);
            Some((v, DVector::from_vec(vec![2.0 * (x[0] - 1.0), 6.0 * (x[1] + 3.0)])))
        };
        let out = minimize(f, DVector::from_vec(vec![-5.0, 4.0]), &BfgsOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] + 3.0).abs() < 1e-6);
    }

    #[test]
    fn objective_decreases_monotonically() {
        let mut trace = Vec::new();
        let f = |x: &DVector<f64>| {
            let v: f64 = x.iter().enumerate().map(|(i, &a)| (i as f64 + 1.0) * (a - 0.5).powi(4) + a * a).sum();
            let g = DVector::from_fn(x.len(), |i, _| 4.0 * (i as f64 + 1.0) * (x[i] - 0.5).powi(3) + 2.0 * x[i]);
            Some((v, g))
        };
        let mut wrapped = |x: &DVector<f64>| f(x);
        let x0 = DVector::from_element(4, 3.0);
        let mut last = f64::INFINITY;
        let mut opts = BfgsOptions::default();
        for it in 1..20 {
            opts.max_iter = it;
            let out = minimize(&mut wrapped, x0.clone(), &opts);
            trace.push(out.f);
            assert!(out.f <= last + 1e-15);
            last = out.f;
        }
    }
}
