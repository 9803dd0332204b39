//! BIC order selection over the grid of admissible `(r, s)`.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fit, Estimator, FitOptions, FitReport};
use crate::params::ModelOrder;
use crate::scalar::{to_f64, Scalar};

/// Slack allowed when checking that nested models do not fit worse.
pub const NESTING_TOL: f64 = 1e-3;

/// `2 L̃_n + d̄ ln n`.
pub fn bic<T: Scalar>(fit: &FitReport<T>) -> f64 {
    fit.bic()
}

/// The grid `{(r, s) : 1 ≤ r + 2s ≤ o_max}`, by `r + 2s` and then `s`.
pub fn order_grid(o_max: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for o in 1..=o_max {
        for s in 0..=o / 2 {
            out.push((o - 2 * s, s));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub fit: FitOptions,
    /// Ψ window for every cell; `m` when absent.
    pub k_window: Option<usize>,
}

/// One row of the BIC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicCell {
    pub r: usize,
    pub s: usize,
    pub dim: usize,
    pub neg_loglik: Option<f64>,
    pub bic: Option<f64>,
    pub converged: bool,
    pub note: String,
}

impl BicCell {
    fn valid(&self) -> bool {
        self.converged && self.bic.is_some_and(f64::is_finite)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Selection<T: Scalar> {
    /// Minimizing `(r, s)`, absent when no cell is valid.
    pub selected: Option<(usize, usize)>,
    pub table: Vec<BicCell>,
    pub estimator: Estimator,
    pub o_max: usize,
    #[serde(skip)]
    pub fits: Vec<Option<FitReport<T>>>,
}

impl<T: Scalar> Selection<T> {
    pub fn selected_fit(&self) -> Option<&FitReport<T>> {
        let (r, s) = self.selected?;
        let idx = self.table.iter().position(|c| c.r == r && c.s == s)?;
        self.fits[idx].as_ref()
    }

    /// CSV with columns `r,s,d,neg_loglik,bic,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,s,d,neg_loglik,bic,converged\n");
        let f = |x: Option<f64>| x.map(|v| format!("{v:.10}")).unwrap_or_else(|| "NA".into());
        for c in &self.table {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.r,
                c.s,
                c.dim,
                f(c.neg_loglik),
                f(c.bic),
                c.converged
            ));
        }
        out
    }
}

fn cell_seed(root: u64, idx: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(idx as u64 + 1);
    rng.next_u64()
}

/// Fits every cell of the grid and picks the smallest BIC.
///
/// Ties go to the earlier cell in [`order_grid`] order, i.e. toward smaller
/// `r + 2s` and then smaller `s`.
pub fn select_order<T: Scalar>(
    panel: &DMatrix<T>,
    o_max: usize,
    estimator: Estimator,
    opts: &SelectOptions,
) -> Result<Selection<T>> {
    let m = panel.ncols();
    if o_max == 0 || o_max > m {
        return Err(Error::InvalidArgument(format!(
            "o_max must lie in 1..={m}, got {o_max}"
        )));
    }
    opts.fit.validate()?;
    let kw = opts.k_window.unwrap_or(m);
    let grid = order_grid(o_max);
    let orders: Vec<ModelOrder> = grid
        .iter()
        .map(|&(r, s)| ModelOrder::new(m, r, s, kw))
        .collect::<Result<_>>()?;

    let results: Vec<Result<FitReport<T>>> = orders
        .par_iter()
        .enumerate()
        .map(|(idx, &order)| {
            let fopts = FitOptions {
                seed: cell_seed(opts.fit.seed, idx),
                ..opts.fit.clone()
            };
            fit(panel, order, estimator, &fopts)
        })
        .collect();

    let mut table = Vec::with_capacity(grid.len());
    let mut fits = Vec::with_capacity(grid.len());
    for ((&(r, s), order), res) in grid.iter().zip(&orders).zip(results) {
        let dim = match estimator {
            Estimator::General => order.dim_general(),
            Estimator::LowRank => order.dim_lowrank(),
        };
        match res {
            Ok(f) => {
                let l = to_f64(f.neg_loglik);
                table.push(BicCell {
                    r,
                    s,
                    dim,
                    neg_loglik: Some(l),
                    bic: Some(f.bic()),
                    converged: f.converged,
                    note: if f.converged {
                        String::new()
                    } else {
                        "optimizer did not converge".into()
                    },
                });
                fits.push(Some(f));
            }
            Err(e) => {
                table.push(BicCell {
                    r,
                    s,
                    dim,
                    neg_loglik: None,
                    bic: None,
                    converged: false,
                    note: e.to_string(),
                });
                fits.push(None);
            }
        }
    }
    flag_nesting(&mut table);

    let selected = argmin(&table);
    Ok(Selection {
        selected,
        table,
        estimator,
        o_max,
        fits,
    })
}

/// First valid cell with the strictly smallest BIC.
fn argmin(table: &[BicCell]) -> Option<(usize, usize)> {
    let mut selected = None;
    let mut best = f64::INFINITY;
    for c in table.iter().filter(|c| c.valid()) {
        let b = c.bic.expect("valid");
        if b < best {
            best = b;
            selected = Some((c.r, c.s));
        }
    }
    selected
}

/// A cell nesting a smaller converged cell must not fit worse.
fn flag_nesting(table: &mut [BicCell]) {
    let snapshot: Vec<(usize, usize, Option<f64>, bool)> = table
        .iter()
        .map(|c| (c.r, c.s, c.neg_loglik, c.converged))
        .collect();
    for cell in table.iter_mut() {
        let Some(big) = cell.neg_loglik else { continue };
        let worse = snapshot.iter().any(|&(r, s, l, conv)| {
            conv && (r, s) != (cell.r, cell.s)
                && r <= cell.r
                && s <= cell.s
                && l.is_some_and(|small| big > small + NESTING_TOL)
        });
        if worse && cell.converged {
            cell.converged = false;
            cell.note = "fits worse than a nested smaller model".into();
        }
    }
}
