use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::recourse::Method;

use super::metrics::monotone_with_tolerance;
use super::sweep::{BoundRecord, ResultRow, SweepReport};

pub const TOOL_NAME: &str = "reclab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance for a single inversion in the ε-monotonicity checks.
pub const MONOTONE_TOLERANCE: f64 = 0.02;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

pub fn adv_accuracy_column(attack_epsilon: f64) -> String {
    format!("adv_accuracy_eps{attack_epsilon}")
}

fn results_header(attack_epsilon: f64) -> Vec<String> {
    [
        "dataset",
        "model_family",
        "depth",
        "width",
        "method",
        "epsilon",
        "seed",
        "n_attempted",
        "validity",
        "mean_cost",
        "cost_diff_vs_eps0",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([
        adv_accuracy_column(attack_epsilon),
        "bound_violations".into(),
        "bound_vacuous".into(),
    ])
    .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_results_csv(
    path: impl AsRef<Path>,
    rows: &[ResultRow],
    attack_epsilon: f64,
) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(results_header(attack_epsilon))?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.model_family.clone(),
            r.depth.to_string(),
            r.width.to_string(),
            r.method.to_string(),
            real(r.epsilon),
            r.seed.to_string(),
            r.n_attempted.to_string(),
            opt_real(r.validity),
            opt_real(r.mean_cost),
            opt_real(r.cost_diff_vs_eps0),
            real(r.adv_accuracy),
            r.bound_violations.to_string(),
            r.bound_vacuous.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<&str> {
    rec.get(i)
        .ok_or_else(|| Error::Schema(format!("results row {line} has too few fields")))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| {
        Error::Schema(format!(
            "results row {line}: cannot parse {what} from {s:?}"
        ))
    })
}

fn parse_opt(s: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, what, line).map(Some)
    }
}

/// Reads a `results.csv` written by [`write_results_csv`].
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let headers = r.headers()?.clone();
    if headers.len() != 14 || &headers[0] != "dataset" {
        return Err(Error::Schema(format!(
            "{} is not a results file",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let f = |i| field(&rec, i, line);
        rows.push(ResultRow {
            dataset: f(0)?.to_string(),
            model_family: f(1)?.to_string(),
            depth: parse(f(2)?, "depth", line)?,
            width: parse(f(3)?, "width", line)?,
            method: f(4)?.parse::<Method>()?,
            epsilon: parse(f(5)?, "epsilon", line)?,
            seed: parse(f(6)?, "seed", line)?,
            n_attempted: parse(f(7)?, "n_attempted", line)?,
            validity: parse_opt(f(8)?, "validity", line)?,
            mean_cost: parse_opt(f(9)?, "mean_cost", line)?,
            cost_diff_vs_eps0: parse_opt(f(10)?, "cost_diff_vs_eps0", line)?,
            adv_accuracy: parse(f(11)?, "adv_accuracy", line)?,
            bound_violations: parse(f(12)?, "bound_violations", line)?,
            bound_vacuous: parse(f(13)?, "bound_vacuous", line)?,
        });
    }
    Ok(rows)
}

pub fn write_bounds_csv(path: impl AsRef<Path>, bounds: &[BoundRecord]) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record([
        "epsilon",
        "seed",
        "instance_id",
        "bound",
        "lower",
        "upper",
        "empirical",
        "contained",
        "vacuous",
    ])?;
    for b in bounds {
        let i = &b.interval;
        w.write_record([
            real(b.epsilon),
            b.seed.to_string(),
            b.instance_id.to_string(),
            i.kind.to_string(),
            real(i.lower),
            real(i.upper),
            real(i.empirical),
            i.contained.to_string(),
            i.vacuous.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

fn write_conditions_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "epsilon",
        "seed",
        "instance_id",
        "condition",
        "lhs",
        "rhs",
        "holds",
        "valid_nr",
        "valid_r",
    ])?;
    for c in &report.conditions {
        w.write_record([
            real(c.epsilon),
            c.seed.to_string(),
            c.instance_id.to_string(),
            c.condition.kind.to_string(),
            real(c.condition.lhs),
            real(c.condition.rhs),
            c.condition.holds.to_string(),
            c.valid_nr.to_string(),
            c.valid_r.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Seed-averaged value per `(method, ε)` in configuration order; `None` where no seed has a value.
pub fn seed_means(
    report: &SweepReport,
    value: impl Fn(&ResultRow) -> Option<f64>,
) -> Vec<(Method, f64, Option<f64>, usize)> {
    let mut out = Vec::new();
    for &m in &report.config.methods {
        for &eps in &report.config.epsilons {
            let vals: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.method == m && r.epsilon == eps)
                .filter_map(&value)
                .collect();
            let mean = if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            };
            out.push((m, eps, mean, vals.len()));
        }
    }
    out
}

fn write_plot(path: &Path, column: &str, data: &[(Method, f64, Option<f64>, usize)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["method", "epsilon", column, "n_seeds"])?;
    for (m, eps, v, n) in data {
        w.write_record([m.to_string(), real(*eps), opt_real(*v), n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn curve(data: &[(Method, f64, Option<f64>, usize)], m: Method) -> Vec<f64> {
    data.iter()
        .filter(|d| d.0 == m)
        .filter_map(|d| d.2)
        .collect()
}

/// Aggregates written to `summary.json`.
pub fn summary_json(report: &SweepReport) -> Value {
    let mut by_kind: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for b in &report.bounds {
        let e = by_kind.entry(b.interval.kind.to_string()).or_default();
        e.0 += 1;
        e.1 += b.interval.is_violation() as usize;
        e.2 += b.interval.vacuous as usize;
    }
    let bounds: BTreeMap<String, Value> = by_kind
        .into_iter()
        .map(|(k, (rows, v, vac))| (k, json!({"rows": rows, "violations": v, "vacuous": vac})))
        .collect();

    let mut by_cond: BTreeMap<String, [usize; 4]> = BTreeMap::new();
    for c in &report.conditions {
        let e = by_cond.entry(c.condition.kind.to_string()).or_default();
        e[0] += 1;
        if c.condition.holds {
            e[1] += 1;
            e[2] += c.valid_nr as usize;
            e[3] += c.valid_r as usize;
        }
    }
    let ratio = |a: usize, b: usize| {
        if b == 0 {
            Value::Null
        } else {
            json!(a as f64 / b as f64)
        }
    };
    let conditions: BTreeMap<String, Value> = by_cond
        .into_iter()
        .map(|(k, [n, h, vnr, vr])| {
            (
                k,
                json!({
                    "rows": n,
                    "holds": h,
                    "holds_fraction": ratio(h, n),
                    "valid_nr_given_holds": ratio(vnr, h),
                    "valid_r_given_holds": ratio(vr, h),
                }),
            )
        })
        .collect();

    let validity = seed_means(report, |r| r.validity);
    let cost_diff = seed_means(report, |r| r.cost_diff_vs_eps0);
    let monotonicity: Vec<Value> = report
        .config
        .methods
        .iter()
        .map(|&m| {
            json!({
                "method": m,
                "validity_non_increasing": monotone_with_tolerance(&curve(&validity, m), true, MONOTONE_TOLERANCE),
                "cost_diff_non_decreasing": monotone_with_tolerance(&curve(&cost_diff, m), false, MONOTONE_TOLERANCE),
            })
        })
        .collect();

    json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config": report.config,
        "n_rows": report.rows.len(),
        "bound_rows": report.bounds.len(),
        "total_violations": report.total_violations(),
        "total_vacuous": report.total_vacuous(),
        "bounds": bounds,
        "conditions": conditions,
        "monotonicity": monotonicity,
        "cells": report.cells,
    })
}

/// Files written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub results: PathBuf,
    pub bounds: PathBuf,
    pub conditions: PathBuf,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

pub fn emit_report(report: &SweepReport, dir: impl AsRef<Path>) -> Result<ReportPaths> {
    let dir = dir.as_ref();
    let plot_dir = dir.join("plotdata");
    std::fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    let paths = ReportPaths {
        results: dir.join("results.csv"),
        bounds: dir.join("bounds.csv"),
        conditions: dir.join("conditions.csv"),
        summary: dir.join("summary.json"),
        plots: vec![
            plot_dir.join("cost_diff_vs_eps.csv"),
            plot_dir.join("validity_vs_eps.csv"),
            plot_dir.join("adv_accuracy_vs_eps.csv"),
        ],
    };
    write_results_csv(&paths.results, &report.rows, report.config.attack_epsilon)?;
    write_bounds_csv(&paths.bounds, &report.bounds)?;
    write_conditions_csv(&paths.conditions, report)?;
    let text = serde_json::to_string_pretty(&summary_json(report))? + "\n";
    std::fs::write(&paths.summary, text).map_err(|e| Error::io(&paths.summary, e))?;
    write_plot(
        &paths.plots[0],
        "cost_diff_vs_eps0",
        &seed_means(report, |r| r.cost_diff_vs_eps0),
    )?;
    write_plot(
        &paths.plots[1],
        "validity",
        &seed_means(report, |r| r.validity),
    )?;
    write_plot(
        &paths.plots[2],
        &adv_accuracy_column(report.config.attack_epsilon),
        &seed_means(report, |r| Some(r.adv_accuracy)),
    )?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    fn row(method: Method, eps: f64, seed: u64, validity: f64, cost: Option<f64>) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            model_family: "linear".into(),
            depth: 0,
            width: 0,
            method,
            epsilon: eps,
            seed,
            n_attempted: 10,
            validity: Some(validity),
            mean_cost: cost,
            cost_diff_vs_eps0: cost.map(|c| c - 1.0),
            adv_accuracy: 0.1 + eps,
            bound_violations: 0,
            bound_vacuous: 3,
        }
    }

    #[test]
    fn empty_report_has_header_only_and_valid_json() {
        let dir = tempfile::tempdir().unwrap();
        let rep = SweepReport::empty(ExperimentConfig::default());
        let p = emit_report(&rep, dir.path()).unwrap();
        let text = std::fs::read_to_string(&p.results).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(
            text.starts_with("dataset,model_family,depth,width,method,epsilon,seed,n_attempted")
        );
        assert!(text.contains("adv_accuracy_eps0.1"));
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&p.summary).unwrap()).unwrap();
        assert_eq!(v["n_rows"], 0);
        assert!(read_results(&p.results).unwrap().is_empty());
    }

    #[test]
    fn results_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row(Method::Scfe, 0.0, 0, 1.0 / 3.0, Some(std::f64::consts::PI)),
            row(Method::Gsm, 0.1, 2, 0.7, None),
        ];
        let path = dir.path().join("r.csv");
        write_results_csv(&path, &rows, 0.1).unwrap();
        assert_eq!(read_results(&path).unwrap(), rows);
    }

    #[test]
    fn plotdata_has_one_row_per_eps_per_method() {
        let mut cfg = ExperimentConfig::default();
        cfg.epsilons = vec![0.0, 0.1, 0.2];
        cfg.methods = vec![Method::Scfe, Method::Gsm];
        cfg.seeds = vec![0, 1];
        let mut rep = SweepReport::empty(cfg.clone());
        for &m in &cfg.methods {
            for &e in &cfg.epsilons {
                for &s in &cfg.seeds {
                    rep.rows.push(row(m, e, s, 1.0 - e, Some(1.0 + e)));
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = emit_report(&rep, dir.path()).unwrap();
        for plot in &p.plots {
            let text = std::fs::read_to_string(plot).unwrap();
            assert_eq!(text.lines().count(), 1 + 3 * 2, "{}", plot.display());
        }
        let v = summary_json(&rep);
        assert_eq!(v["monotonicity"][0]["validity_non_increasing"], true);
        assert_eq!(v["monotonicity"][0]["cost_diff_non_decreasing"], true);
    }
}
