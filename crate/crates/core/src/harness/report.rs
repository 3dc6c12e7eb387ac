use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::{cell_dir, instance_dir, CellStatus, SweepSummary, ORACLE_JSON, POINTS_CSV, TRACE_CSV};
use crate::error::{Error, Result};
use crate::estimator::EstimatorKind;
use crate::oracle::OracleResult;
use crate::orchestrator::{read_points_csv, read_trace_csv};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
/// Per-cell series written by [`report`]: `t,suboptimality,tracking_error`.
pub const TRACKING_CSV: &str = "tracking.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub seed: u64,
    pub estimator: EstimatorKind,
    pub cxi_product: f64,
    pub status: CellStatus,
    pub rounds_completed: usize,
    pub final_residual: Option<f64>,
    pub windowed_avg_residual: Option<f64>,
    pub theorem_bound: Option<f64>,
    pub oracle_available: bool,
    /// `θ(x*_T) − θ*` against the oracle.
    pub final_suboptimality: Option<f64>,
    /// `‖x*_T − x_best‖` against the oracle.
    pub final_tracking_error: Option<f64>,
}

/// Medians over the completed cells of one (estimator, cξ) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub estimator: EstimatorKind,
    pub cxi_product: f64,
    pub cells: usize,
    pub failed: usize,
    pub median_final_residual: Option<f64>,
    pub median_windowed_avg_residual: Option<f64>,
    pub median_final_suboptimality: Option<f64>,
    pub median_final_tracking_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cells: Vec<CellReport>,
    pub groups: Vec<GroupReport>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { 0.5 * (values[m - 1] + values[m]) })
}

fn read_oracle(path: &Path) -> Result<Option<OracleResult>> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(Some(serde_json::from_str(&s)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Aggregates a sweep directory into `report.json`, `report.txt` and a
/// `tracking.csv` per cell. Reads only what [`run_experiment`](super::run_experiment)
/// wrote, so running it twice gives the same files.
pub fn report(dir: &Path) -> Result<Report> {
    let summary = SweepSummary::read(dir)?;
    if !summary.cells.iter().any(|c| c.status == CellStatus::Ok) {
        return Err(Error::config(format!("{} has no completed cell", dir.display())));
    }
    let mut oracles: BTreeMap<String, Option<OracleResult>> = BTreeMap::new();
    let mut cells = Vec::with_capacity(summary.cells.len());
    for c in &summary.cells {
        if !oracles.contains_key(&c.instance) {
            let o = read_oracle(&instance_dir(dir, &c.instance).join(ORACLE_JSON))?;
            oracles.insert(c.instance.clone(), o);
        }
        let oracle = oracles[&c.instance].as_ref();
        let mut cell = CellReport {
            label: c.label.clone(),
            seed: c.seed,
            estimator: c.estimator,
            cxi_product: c.cxi_product,
            status: c.status,
            rounds_completed: c.rounds_completed,
            final_residual: c.final_residual,
            windowed_avg_residual: c.windowed_avg_residual,
            theorem_bound: c.theorem_bound,
            oracle_available: oracle.is_some(),
            final_suboptimality: None,
            final_tracking_error: None,
        };
        let cdir = cell_dir(dir, &c.label);
        if let (Some(o), true) = (oracle, cdir.join(TRACE_CSV).exists()) {
            let rows = read_trace_csv(cdir.join(TRACE_CSV))?;
            let points = read_points_csv(cdir.join(POINTS_CSV))?;
            if rows.len() != points.len() {
                return Err(Error::Format(format!("{}: trace and points disagree in length", c.label)));
            }
            let best = o.x_best();
            let mut w = csv::Writer::from_path(cdir.join(TRACKING_CSV)).map_err(|e| Error::Format(e.to_string()))?;
            w.write_record(["t", "suboptimality", "tracking_error"])?;
            for (r, p) in rows.iter().zip(&points) {
                let sub = r.theta - o.theta_best;
                let track = (p - &best).norm();
                w.write_record([r.t.to_string(), sub.to_string(), track.to_string()])?;
                cell.final_suboptimality = Some(sub);
                cell.final_tracking_error = Some(track);
            }
            w.flush().map_err(|e| Error::io(cdir.join(TRACKING_CSV), e))?;
        }
        cells.push(cell);
    }

    let mut groups: BTreeMap<(EstimatorKind, u64), Vec<&CellReport>> = BTreeMap::new();
    for c in &cells {
        groups.entry((c.estimator, c.cxi_product.to_bits())).or_default().push(c);
    }
    let groups = groups
        .into_values()
        .map(|members| {
            let ok: Vec<_> = members.iter().filter(|c| c.status == CellStatus::Ok).collect();
            let med = |f: fn(&CellReport) -> Option<f64>| median(&mut ok.iter().filter_map(|c| f(c)).collect::<Vec<_>>());
            GroupReport {
                estimator: members[0].estimator,
                cxi_product: members[0].cxi_product,
                cells: members.len(),
                failed: members.len() - ok.len(),
                median_final_residual: med(|c| c.final_residual),
                median_windowed_avg_residual: med(|c| c.windowed_avg_residual),
                median_final_suboptimality: med(|c| c.final_suboptimality),
                median_final_tracking_error: med(|c| c.final_tracking_error),
            }
        })
        .collect();

    let report = Report { cells, groups };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    std::fs::write(dir.join(REPORT_JSON), json).map_err(|e| Error::io(dir.join(REPORT_JSON), e))?;
    std::fs::write(dir.join(REPORT_TXT), render_table(&report)).map_err(|e| Error::io(dir.join(REPORT_TXT), e))?;
    Ok(report)
}

fn cell_text(v: Option<f64>, available: bool) -> String {
    match (v, available) {
        (Some(x), _) => format!("{x:.3e}"),
        (None, false) => "unavailable".into(),
        (None, true) => "-".into(),
    }
}

/// Fixed-width text rendering of a report.
pub fn render_table(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "cell", "status", "residual", "avg_resid", "bound", "subopt", "tracking"
    );
    for c in &report.cells {
        let _ = writeln!(
            s,
            "{:<28} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
            c.label,
            if c.status == CellStatus::Ok { "ok" } else { "failed" },
            cell_text(c.final_residual, true),
            cell_text(c.windowed_avg_residual, true),
            cell_text(c.theorem_bound, true),
            cell_text(c.final_suboptimality, c.oracle_available),
            cell_text(c.final_tracking_error, c.oracle_available),
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<10} {:>6} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "estimator", "cxi", "cells", "failed", "med_resid", "med_avg", "med_subopt", "med_track"
    );
    for g in &report.groups {
        let avail = report
            .cells
            .iter()
            .any(|c| c.estimator == g.estimator && c.cxi_product == g.cxi_product && c.oracle_available);
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12}",
            g.estimator.as_str(),
            g.cxi_product,
            g.cells,
            g.failed,
            cell_text(g.median_final_residual, true),
            cell_text(g.median_windowed_avg_residual, true),
            cell_text(g.median_final_suboptimality, avail),
            cell_text(g.median_final_tracking_error, avail),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn missing_values_render_by_cause() {
        assert_eq!(cell_text(None, false), "unavailable");
        assert_eq!(cell_text(None, true), "-");
        assert_eq!(cell_text(Some(0.5), false), "5.000e-1");
    }
}
