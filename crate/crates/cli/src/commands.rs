//! The five subcommands. Each writes its files under the output directory
//! and returns the process exit code on success.

use std::fs;
use std::path::{Path, PathBuf};

use mlab_core::domain::{
    predicted_exponent, validate, ExponentEstimate, ExtrapolationModel, HypothesisCheck,
    ValidityReport, DEFAULT_GRID_POINTS, DEFAULT_TOL,
};
use mlab_core::markov::{
    domain_descriptor, factor_series, fit_points, ExponentFit, FactorKind, FactorSeries, Method,
    SeriesOptions,
};
use mlab_core::markov::{remez_ratio_p2, SeriesFailure};
use mlab_core::specfun::{admissible, default_omega, witness_ratio, WitnessSpec};
use mlab_core::CuspidalDomain;
use serde::Serialize;

use crate::config::{OmegaSetting, RunConfig};
use crate::error::{CliError, CliResult};

/// Flags shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub window: Option<(usize, usize)>,
}

/// Grid depth of the predicted-exponent extrapolation.
pub const PREDICTED_N_MAX: usize = 1 << 20;

/// Scientific notation with 17 significant digits.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn out_dir(cfg: &RunConfig, ov: &Overrides) -> CliResult<PathBuf> {
    let dir = ov
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Fails with exit code 3 when a hypothesis check fails.
fn require_valid(d: &CuspidalDomain) -> CliResult<ValidityReport> {
    let rep = validate(d, DEFAULT_GRID_POINTS, DEFAULT_TOL)
        .map_err(|e| CliError::from_core("domain", e))?;
    if !rep.valid {
        let names: Vec<&str> = rep.failures().map(|c| c.name).collect();
        return Err(CliError::Hypothesis(format!(
            "domain hypotheses fail: {}",
            names.join(", ")
        )));
    }
    Ok(rep)
}

#[derive(Serialize)]
struct CheckReport<'a> {
    domain: String,
    valid: bool,
    checks: &'a [HypothesisCheck],
    predicted_exponent: Option<ExponentEstimate>,
    predicted_exponent_error: Option<String>,
}

pub fn cmd_check(cfg: &RunConfig, ov: &Overrides) -> CliResult<i32> {
    let d = cfg.domain()?;
    let rep = validate(&d, DEFAULT_GRID_POINTS, DEFAULT_TOL)
        .map_err(|e| CliError::from_core("domain", e))?;
    let model = ExtrapolationModel::default_for(d.f());
    let (est, est_err) = match predicted_exponent(&d, PREDICTED_N_MAX, model) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let dir = out_dir(cfg, ov)?;
    let report = CheckReport {
        domain: domain_descriptor(&d),
        valid: rep.valid,
        checks: &rep.checks,
        predicted_exponent: est.clone(),
        predicted_exponent_error: est_err,
    };
    write_json(&dir.join("check.json"), &report)?;
    for c in &rep.checks {
        println!("{:<18} {}", c.name, if c.passed { "pass" } else { "FAIL" });
    }
    if let Some(e) = &est {
        println!("predicted exponent {:.6} ({:?})", e.extrapolated, e.model);
    }
    if rep.valid {
        Ok(0)
    } else {
        let names: Vec<&str> = rep.failures().map(|c| c.name).collect();
        eprintln!("error: domain hypotheses fail: {}", names.join(", "));
        Ok(3)
    }
}

fn series_options(cfg: &RunConfig, ov: &Overrides) -> SeriesOptions {
    SeriesOptions {
        threads: ov.threads,
        budget: cfg.compute.budget,
        seed: ov.seed.unwrap_or(cfg.compute.seed),
    }
}

fn window(cfg: &RunConfig, ov: &Overrides) -> (usize, usize) {
    ov.window.unwrap_or((cfg.compute.n_min, cfg.compute.n_max))
}

#[derive(Serialize)]
struct MarkovSummary {
    kind: FactorKind,
    p: f64,
    method: &'static str,
    lower_bound: bool,
    domain: String,
    rows: usize,
    fit: Option<ExponentFit>,
    fit_error: Option<String>,
    error: Option<String>,
}

fn markov_rows(s: &FactorSeries) -> Vec<Vec<String>> {
    s.entries
        .iter()
        .map(|&(n, v)| {
            vec![
                n.to_string(),
                fmt_value(v),
                fmt_value((n as f64).ln()),
                fmt_value(v.ln()),
                s.method.tag().to_string(),
            ]
        })
        .collect()
}

pub fn cmd_markov(cfg: &RunConfig, ov: &Overrides) -> CliResult<i32> {
    let d = cfg.domain()?;
    require_valid(&d)?;
    let q = cfg.quad_spec()?;
    let c = &cfg.compute;
    let kind = match cfg.axis() {
        mlab_core::Axis::X => FactorKind::MarkovX,
        mlab_core::Axis::Y => FactorKind::MarkovY,
    };
    let (series, failure) = match factor_series(
        &d,
        kind,
        c.p,
        c.n_min..=c.n_max,
        c.method,
        &q,
        &series_options(cfg, ov),
    ) {
        Ok(s) => (s, None),
        Err(SeriesFailure { partial, n, error }) => (
            partial,
            Some(CliError::from_core(&format!("n = {n}"), error)),
        ),
    };
    let dir = out_dir(cfg, ov)?;
    if cfg.wants("csv") {
        write_csv(
            &dir.join("markov.csv"),
            &["n", "factor", "ln_n", "ln_factor", "method"],
            &markov_rows(&series),
        )?;
    }
    let win = window(cfg, ov);
    let (fit, fit_error) = match fit_points(&series.entries, win) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = MarkovSummary {
        kind,
        p: c.p,
        method: c.method.tag(),
        lower_bound: c.method.is_lower_bound(),
        domain: series.domain.clone(),
        rows: series.entries.len(),
        fit,
        fit_error,
        error: failure.as_ref().map(|e| e.to_string()),
    };
    if cfg.wants("json") {
        write_json(&dir.join("markov_summary.json"), &summary)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(f) = &summary.fit {
        let label = if summary.lower_bound {
            " (lower bounds)"
        } else {
            ""
        };
        println!(
            "{:?} p={} slope {:.6} over n in [{}, {}]{label}",
            kind, c.p, f.slope, f.window.0, f.window.1
        );
    }
    Ok(0)
}

#[derive(Serialize)]
struct WitnessSummary {
    omega: f64,
    sigma: f64,
    p: f64,
    k: u32,
    admissible: bool,
    warnings: Vec<String>,
    domain: String,
}

pub fn cmd_witness(cfg: &RunConfig, ov: &Overrides) -> CliResult<i32> {
    let d = cfg.domain()?;
    require_valid(&d)?;
    let q = cfg.quad_spec()?;
    let p = cfg.compute.p;
    let omega = match cfg.witness.omega {
        OmegaSetting::Value(w) => w,
        OmegaSetting::Keyword(_) => default_omega(p, d.k()),
    };
    let sigma = cfg.witness.sigma;
    let mut warnings = Vec::new();
    let ok = admissible(omega, p, d.k());
    if !ok {
        let w = format!(
            "warning: (omega={omega}, p={p}, k={}) is not admissible: omega p + p/2 - 2 = {} is not > 2k(p+1) = {}",
            d.k(),
            omega * p + p / 2.0 - 2.0,
            2.0 * d.k() as f64 * (p + 1.0)
        );
        eprintln!("{w}");
        warnings.push(w);
    }
    let n_min = cfg.compute.n_min.max(1);
    let mut rows = Vec::new();
    for n in n_min..=cfg.compute.n_max {
        let spec =
            WitnessSpec::new(omega, sigma, n, p).map_err(|e| CliError::from_core("witness", e))?;
        let r = witness_ratio(&spec, &d, &q)
            .map_err(|e| CliError::from_core(&format!("n = {n}"), e))?;
        rows.push(vec![
            n.to_string(),
            fmt_value(r.rho),
            fmt_value(r.eta_prime),
            fmt_value(r.normalized),
        ]);
    }
    let dir = out_dir(cfg, ov)?;
    if cfg.wants("csv") {
        write_csv(
            &dir.join("witness.csv"),
            &["n", "rho", "eta_prime", "normalized"],
            &rows,
        )?;
    }
    if cfg.wants("json") {
        let summary = WitnessSummary {
            omega,
            sigma,
            p,
            k: d.k(),
            admissible: ok,
            warnings,
            domain: domain_descriptor(&d),
        };
        write_json(&dir.join("witness_summary.json"), &summary)?;
    }
    println!("witness omega={omega} sigma={sigma}: {} rows", rows.len());
    Ok(0)
}

#[derive(Serialize)]
struct RemezSummary {
    mode: &'static str,
    domain: String,
    rows: usize,
    min_ratio: Option<f64>,
    /// `ratio(n_max) / ratio(ceil(n_max / 2))` when both are in range.
    doubling_ratio: Option<DoublingRatio>,
    error: Option<String>,
}

#[derive(Serialize)]
struct DoublingRatio {
    n_low: usize,
    n_high: usize,
    value: f64,
}

pub fn cmd_remez(cfg: &RunConfig, ov: &Overrides) -> CliResult<i32> {
    let d = cfg.domain()?;
    require_valid(&d)?;
    let q = cfg.quad_spec()?;
    let c = &cfg.compute;
    let (entries, failure, mode) = match c.x_lo {
        None => {
            let n_min = c.n_min.max(2);
            let res = factor_series(
                &d,
                FactorKind::Remez,
                2.0,
                n_min..=c.n_max.max(n_min),
                Method::ExactEigen,
                &q,
                &series_options(cfg, ov),
            );
            match res {
                Ok(s) => (s.entries, None, "inverse-square"),
                Err(SeriesFailure { partial, n, error }) => (
                    partial.entries,
                    Some(CliError::from_core(&format!("n = {n}"), error)),
                    "inverse-square",
                ),
            }
        }
        Some(x_lo) => {
            let mut entries = Vec::new();
            let mut failure = None;
            for n in c.n_min..=c.n_max {
                match remez_ratio_p2(&d, n, x_lo, &q) {
                    Ok(v) => entries.push((n, v)),
                    Err(e) => {
                        failure = Some(CliError::from_core(&format!("n = {n}"), e));
                        break;
                    }
                }
            }
            (entries, failure, "fixed")
        }
    };
    let x_lo_of = |n: usize| c.x_lo.unwrap_or(1.0 / (n * n) as f64);
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|&(n, v)| vec![n.to_string(), fmt_value(x_lo_of(n)), fmt_value(v)])
        .collect();
    let dir = out_dir(cfg, ov)?;
    if cfg.wants("csv") {
        write_csv(&dir.join("remez.csv"), &["n", "x_lo", "ratio"], &rows)?;
    }
    let lookup = |n: usize| entries.iter().find(|e| e.0 == n).map(|e| e.1);
    let n_high = entries.last().map(|e| e.0);
    let doubling_ratio = n_high.and_then(|hi| {
        let lo = hi.div_ceil(2);
        match (lookup(lo), lookup(hi)) {
            (Some(a), Some(b)) if lo < hi => Some(DoublingRatio {
                n_low: lo,
                n_high: hi,
                value: b / a,
            }),
            _ => None,
        }
    });
    let summary = RemezSummary {
        mode,
        domain: domain_descriptor(&d),
        rows: entries.len(),
        min_ratio: entries.iter().map(|e| e.1).reduce(f64::min),
        doubling_ratio,
        error: failure.as_ref().map(|e| e.to_string()),
    };
    if cfg.wants("json") {
        write_json(&dir.join("remez_summary.json"), &summary)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(r) = &summary.doubling_ratio {
        println!("ratio({})/ratio({}) = {:.6}", r.n_high, r.n_low, r.value);
    }
    Ok(0)
}

/// Value columns recognised by `fit`, in order of preference.
const VALUE_COLUMNS: [&str; 3] = ["factor", "ratio", "rho"];

/// `(n, value)` rows of a factor CSV.
pub fn read_series_csv(path: &Path) -> CliResult<Vec<(usize, f64)>> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let n_col = header
        .iter()
        .position(|h| h == "n")
        .ok_or_else(|| bad("missing column \"n\"".into()))?;
    let v_col = VALUE_COLUMNS
        .iter()
        .find_map(|c| header.iter().position(|h| h == *c))
        .ok_or_else(|| {
            bad(format!(
                "missing a value column (one of {})",
                VALUE_COLUMNS.join(", ")
            ))
        })?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| bad(format!("row {}: too few fields", line + 1)))
        };
        let n: usize = field(n_col)?
            .trim()
            .parse()
            .map_err(|e| bad(format!("row {}: n: {e}", line + 1)))?;
        let v: f64 = field(v_col)?
            .trim()
            .parse()
            .map_err(|e| bad(format!("row {}: value: {e}", line + 1)))?;
        out.push((n, v));
    }
    Ok(out)
}

pub fn cmd_fit(csv_path: &Path, ov: &Overrides, out_default: &Path) -> CliResult<i32> {
    let entries = read_series_csv(csv_path)?;
    let win = ov.window.unwrap_or_else(|| {
        let lo = entries.iter().map(|e| e.0).min().unwrap_or(0);
        let hi = entries.iter().map(|e| e.0).max().unwrap_or(0);
        (lo, hi)
    });
    let fit = fit_points(&entries, win).map_err(|e| CliError::from_core("fit", e))?;
    let dir = ov.out.clone().unwrap_or_else(|| out_default.to_path_buf());
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    write_json(&dir.join("fit.json"), &fit)?;
    println!(
        "slope {:.12} intercept {:.12} residual_rms {:.3e} over n in [{}, {}]",
        fit.slope, fit.intercept, fit.residual_rms, fit.window.0, fit.window.1
    );
    Ok(0)
}
