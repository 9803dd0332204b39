use std::path::{Path, PathBuf};

use mgarch::inference::{asymptotic_cov_with, spillover_matrix, CovOptions};
use mgarch::params::{GeneralParams, ModelOrder};
use mgarch::riskcast::{forecast_h, mv_weights, rolling_var, rolling_var_fixed, RollingOptions, RollingVar};
use mgarch::selection::{select_order, SelectOptions};
use mgarch::simulate::{dgp_catalog, simulate, Dgp, SimulateOptions};
use mgarch::stationarity::stationarity_report;
use mgarch::{fit, Estimator, FitOptions, FitReport};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::CliError;
use crate::panel::{load_panel, panel_csv, LoadOptions, ReturnsPanel};

/// Artifacts of one run, written only after the command finishes.
#[derive(Debug, Default)]
pub struct Output {
    pub artifacts: Vec<(String, Vec<u8>)>,
    /// False when estimation did not converge; the run exits with status 2.
    pub converged: bool,
    pub summary: String,
}

impl Output {
    fn new(converged: bool) -> Self {
        Self {
            converged,
            ..Self::default()
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::json)?;
        bytes.push(b'\n');
        self.artifacts.push((name.to_string(), bytes));
        Ok(())
    }

    fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }
}

fn need_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Config("this command is stochastic and requires --seed".into()))
}

fn need_path<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn load_data(data: &Option<PathBuf>, center: bool, missing: &str) -> Result<ReturnsPanel, CliError> {
    let opts = LoadOptions {
        center,
        missing: missing.parse()?,
    };
    load_panel(need_path(data, "data")?, &opts)
}

pub fn parse_order(s: &str, m: usize, k_window: Option<usize>) -> Result<ModelOrder, CliError> {
    let bad = || CliError::Config(format!("order must look like 'r,s', got '{s}'"));
    let (r, s_) = s.split_once(',').ok_or_else(bad)?;
    let r: usize = r.trim().parse().map_err(|_| bad())?;
    let s_: usize = s_.trim().parse().map_err(|_| bad())?;
    Ok(ModelOrder::new(m, r, s_, k_window.unwrap_or(m))?)
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

/// Reads `params.json`, or the estimate inside a `fit.json`.
pub fn load_params(path: &Path) -> Result<GeneralParams<f64>, CliError> {
    let mut v = read_json(path)?;
    if let Some(p) = v.get_mut("params") {
        v = p.take();
    }
    serde_json::from_value(v).map_err(|e| CliError::io(path, e))
}

pub fn load_fit(path: &Path) -> Result<FitReport, CliError> {
    serde_json::from_value(read_json(path)?).map_err(|e| CliError::io(path, e))
}

/// Human-readable name of every entry of the general parameter vector.
pub fn param_names(order: ModelOrder) -> Vec<String> {
    let m = order.m;
    let mut out = Vec::with_capacity(order.dim_general());
    out.extend((1..=m).map(|i| format!("omega_bar[{i}]")));
    out.extend((1..=order.r).map(|k| format!("lambda[{k}]")));
    out.extend((1..=order.s).map(|k| format!("gamma[{k}]")));
    out.extend((1..=order.s).map(|k| format!("phi[{k}]")));
    for (block, count) in [("g0", order.r), ("g1", order.s), ("g2", order.s)] {
        for k in 1..=count {
            for j in 1..=m {
                for i in 1..=m {
                    out.push(format!("{block}[{k}][{i},{j}]"));
                }
            }
        }
    }
    out.push("beta1".into());
    out.push("beta2".into());
    for (i, j) in mgarch::params::rbar_pairs(m) {
        out.push(format!("rbar[{},{}]", i + 1, j + 1));
    }
    out
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<Output, CliError> {
    let seed = need_seed(a.seed)?;
    let p = match &a.params {
        Some(path) => load_params(path)?,
        None => dgp_catalog(a.dgp.parse::<Dgp>()?, seed)?,
    };
    let opts = SimulateOptions {
        burn: a.burn,
        dist: a.dist.parse()?,
        allow_nonstationary: a.allow_nonstationary,
        ..SimulateOptions::default()
    };
    let sim = simulate(&p, a.n, &opts, seed)?;
    let names: Vec<String> = (1..=p.order.m).map(|i| format!("y{i}")).collect();
    let mut out = Output::new(true);
    out.raw("panel.csv", panel_csv(&names, &sim.panel)?);
    out.json("params.json", &p)?;
    out.json("simulation.json", &sim.diagnostics)?;
    out.summary = format!(
        "simulated {} x {} panel (burn {}, {} R repairs)",
        a.n, p.order.m, sim.diagnostics.burn, sim.diagnostics.pd_repairs
    );
    Ok(out)
}

fn fit_options(n_starts: usize, max_iter: usize, grad_tol: f64, seed: u64) -> FitOptions {
    FitOptions {
        n_starts,
        max_iter,
        grad_tol,
        seed,
        ..FitOptions::default()
    }
}

fn estimate_table(rep: &FitReport) -> String {
    let names = param_names(rep.order);
    let theta = rep.estimate_vector();
    let mut s = String::new();
    for (n, v) in names.iter().zip(theta.iter()) {
        s.push_str(&format!("{n:<16} {v:>12.6}\n"));
    }
    s
}

pub fn fit_cmd(a: &FitArgs) -> Result<Output, CliError> {
    let seed = need_seed(a.seed)?;
    let panel = load_data(&a.data, a.center, &a.missing)?;
    let order = parse_order(&a.order, panel.data.ncols(), a.k_window)?;
    let est: Estimator = a.estimator.parse()?;
    let opts = fit_options(a.n_starts, a.max_iter, a.grad_tol, seed);
    let rep = fit(&panel.data, order, est, &opts)?;
    let mut out = Output::new(rep.converged);
    out.json("fit.json", &rep)?;
    out.json("params.json", &rep.params)?;
    out.summary = format!(
        "{est} fit of order ({},{}) on n = {}: neg_loglik {:.6}, BIC {:.4}, converged {}\n{}",
        order.r,
        order.s,
        rep.n_obs,
        rep.neg_loglik,
        rep.bic(),
        rep.converged,
        estimate_table(&rep)
    );
    Ok(out)
}

pub fn select_cmd(a: &SelectArgs) -> Result<Output, CliError> {
    let seed = need_seed(a.seed)?;
    let panel = load_data(&a.data, a.center, &a.missing)?;
    let est: Estimator = a.estimator.parse()?;
    let opts = SelectOptions {
        fit: fit_options(a.n_starts, a.max_iter, 1e-6, seed),
        k_window: a.k_window,
    };
    let sel = select_order(&panel.data, a.omax, est, &opts)?;
    let mut out = Output::new(sel.selected.is_some());
    let table = sel.to_csv();
    out.raw("bic.csv", table.clone().into_bytes());
    out.json("selection.json", &sel)?;
    if let Some(f) = sel.selected_fit() {
        out.json("selected_fit.json", f)?;
    }
    let pick = sel
        .selected
        .map(|(r, s)| format!("({r},{s})"))
        .unwrap_or_else(|| "none".into());
    out.summary = format!("{table}selected order: {pick}");
    Ok(out)
}

fn cov_for(a: &InferArgs) -> Result<(FitReport, mgarch::CovReport), CliError> {
    let rep = load_fit(need_path(&a.fit, "fit")?)?;
    let panel = load_data(&a.data, a.center, &a.missing)?;
    let opts = CovOptions {
        gaussian: a.gaussian,
        settings: rep.options.settings,
    };
    let cov = asymptotic_cov_with(&rep, &panel.data, &opts)?;
    Ok((rep, cov))
}

pub fn infer_cmd(a: &InferArgs) -> Result<Output, CliError> {
    let (rep, cov) = cov_for(a)?;
    let se = cov.std_errors();
    let theta = rep.estimate_vector();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "name", "estimate", "se"]).map_err(CliError::csv)?;
    let mut summary = String::new();
    for (k, name) in param_names(rep.order).iter().enumerate() {
        w.write_record([k.to_string(), name.clone(), theta[k].to_string(), se[k].to_string()])
            .map_err(CliError::csv)?;
        summary.push_str(&format!("{name:<16} {:>12.6} ({:.6})\n", theta[k], se[k]));
    }
    let mut out = Output::new(true);
    out.json("cov.json", &cov)?;
    out.raw("estimates.csv", w.into_inner().map_err(|e| CliError::Config(e.to_string()))?);
    out.summary = summary;
    Ok(out)
}

pub fn spillover_cmd(a: &InferArgs) -> Result<Output, CliError> {
    let (rep, cov) = cov_for(a)?;
    let tests = spillover_matrix(&rep.params, &cov)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut summary = String::from("  i  j     estimate           se        z        p\n");
    for t in &tests {
        w.serialize(t).map_err(CliError::csv)?;
        summary.push_str(&format!(
            "{:>3}{:>3} {:>12.6} {:>12.6} {:>8.3} {:>8.4}\n",
            t.i, t.j, t.estimate, t.se, t.z, t.p
        ));
    }
    let mut out = Output::new(true);
    out.raw("spillover.csv", w.into_inner().map_err(|e| CliError::Config(e.to_string()))?);
    out.json("spillover.json", &tests)?;
    out.summary = summary;
    Ok(out)
}

pub fn stationarity_cmd(a: &StationarityArgs) -> Result<Output, CliError> {
    let p = match (&a.params, &a.dgp) {
        (Some(path), _) => load_params(path)?,
        (None, Some(d)) => dgp_catalog(d.parse::<Dgp>()?, 0)?,
        (None, None) => return Err(CliError::Config("--params or --dgp is required".into())),
    };
    let rep = stationarity_report(&p);
    let mut out = Output::new(true);
    out.json("stationarity.json", &rep)?;
    out.summary = format!(
        "one-norm {:.6}, inf-norm {:.6}, two-norm {:.6}: {}",
        rep.one, rep.inf, rep.two, rep.verdict
    );
    Ok(out)
}

pub fn forecast_cmd(a: &ForecastArgs) -> Result<Output, CliError> {
    let p = load_params(need_path(&a.params, "params")?)?;
    let panel = load_data(&a.data, a.center, &a.missing)?;
    let h = forecast_h(&p, &panel.data)?;
    let w = mv_weights(&h)?;
    let sd = w.dot(&(&h * &w)).sqrt();
    let rows: Vec<Vec<f64>> = (0..h.nrows()).map(|i| h.row(i).iter().copied().collect()).collect();
    let mut out = Output::new(true);
    out.json(
        "forecast.json",
        &json!({
            "n_obs": panel.data.nrows(),
            "series": panel.names,
            "h": rows,
            "mv_weights": w.as_slice(),
            "portfolio_sd": sd,
        }),
    )?;
    out.summary = format!("one-step MV portfolio sd {sd:.6}, weights {:?}", w.as_slice());
    Ok(out)
}

#[derive(Serialize)]
struct LevelSummary {
    tau: f64,
    n_out: usize,
    ecr: f64,
    pe: f64,
    cc: Option<mgarch::riskcast::CcTest>,
    dq: Option<mgarch::riskcast::DqTest>,
}

pub fn backtest_cmd(a: &BacktestArgs) -> Result<Output, CliError> {
    let panel = load_data(&a.data, a.center, &a.missing)?;
    let m = panel.data.ncols();
    let mut opts = RollingOptions {
        window: a.window,
        levels: a.levels.clone(),
        refit_every: a.refit_every,
        estimator: a.estimator.parse()?,
        ..RollingOptions::default()
    };
    let rv: RollingVar = match &a.params {
        Some(path) => rolling_var_fixed(&panel.data, &load_params(path)?, &opts)?,
        None => {
            opts.fit = fit_options(a.n_starts, a.max_iter, 1e-6, need_seed(a.seed)?);
            let order = parse_order(&a.order, m, a.k_window)?;
            rolling_var(&panel.data, order, &opts)?
        }
    };
    let mut out = Output::new(rv.failed_origins.is_empty());
    let mut summary = String::from("     tau   n_out     ECR%       PE    CC p    DQ p\n");
    let mut levels = Vec::new();
    let fmt_p = |p: Option<f64>| p.map(|p| format!("{p:>7.4}")).unwrap_or_else(|| "     NA".into());
    for rep in &rv.reports {
        out.raw(&format!("var_{}.csv", rep.tau), rep.to_csv().into_bytes());
        summary.push_str(&format!(
            "{:>8} {:>7} {:>8.3} {:>8.4} {} {}\n",
            rep.tau,
            rep.hits.len(),
            rep.ecr,
            rep.pe,
            fmt_p(rep.cc.map(|c| c.p)),
            fmt_p(rep.dq.as_ref().map(|d| d.p))
        ));
        levels.push(LevelSummary {
            tau: rep.tau,
            n_out: rep.hits.len(),
            ecr: rep.ecr,
            pe: rep.pe,
            cc: rep.cc,
            dq: rep.dq.clone(),
        });
    }
    out.json(
        "backtest.json",
        &json!({
            "levels": levels,
            "failed_origins": rv.failed_origins,
            "n_refits": rv.n_refits,
            "window": a.window,
            "quantile_convention": mgarch::riskcast::QUANTILE_CONVENTION,
        }),
    )?;
    summary.push_str(&format!(
        "{} refits, {} failed origins",
        rv.n_refits,
        rv.failed_origins.len()
    ));
    out.summary = summary;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_parsing() {
        let o = parse_order("1,0", 2, None).unwrap();
        assert_eq!((o.r, o.s, o.k_window), (1, 0, 2));
        assert_eq!(parse_order(" 0 , 1 ", 3, Some(5)).unwrap().k_window, 5);
        assert!(parse_order("1", 2, None).is_err());
        assert!(parse_order("3,0", 2, None).is_err());
    }

    #[test]
    fn names_cover_the_parameter_vector() {
        let o = ModelOrder::new(3, 1, 1, 3).unwrap();
        let names = param_names(o);
        assert_eq!(names.len(), o.dim_general());
        let l = o.layout();
        assert_eq!(names[l.lambda], "lambda[1]");
        assert_eq!(names[l.g0_entry(0, 1, 0)], "g0[1][2,1]");
        assert_eq!(names[l.beta1], "beta1");
        assert_eq!(names.last().unwrap(), "rbar[3,2]");
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        let e = simulate_cmd(&SimulateArgs::default()).unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
    }
}
