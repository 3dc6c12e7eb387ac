use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_instance, ExperimentConfig, InstanceDocument, InstanceSpec};
use crate::error::{Error, Result};
use crate::estimator::EstimatorKind;
use crate::game::QuadraticGame;
use crate::geometry::FeasibleGeometry;
use crate::incentive::IncentiveSchedule;
use crate::oracle::{global_minimizer_oracle, OracleResult};
use crate::orchestrator::{
    average_residual, default_start, descent_check, error_envelope, run, stabilization_round, theorem_bound, RunMeta,
    RunTrace,
};

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const TRACE_CSV: &str = "trace.csv";
pub const POINTS_CSV: &str = "points.csv";
pub const META_JSON: &str = "meta.json";
pub const INSTANCE_JSON: &str = "instance.json";
pub const ORACLE_JSON: &str = "oracle.json";

/// Span and relative tolerance used to pick `t̄` from the error envelope.
pub const STABILIZATION_SPAN: usize = 10;
pub const STABILIZATION_REL: f64 = 0.05;

// decorrelates the feedback noise from the instance draw with the same seed
const RUN_STREAM: u64 = 1;
const ORACLE_STREAM: u64 = 2;

/// One (seed, estimator, cξ) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub seed: u64,
    /// Directory name under `instances/`.
    pub instance: String,
    pub estimator: EstimatorKind,
    pub cxi_product: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Per-cell sidecar written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub cell: Cell,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunMeta>,
    pub theta_star_oracle: Option<f64>,
    pub config: ExperimentConfig,
}

/// A row of the sweep summary. Metrics are absent for cells that failed before
/// producing a trace, and `theta_gap` without an oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub label: String,
    pub seed: u64,
    pub instance: String,
    pub estimator: EstimatorKind,
    pub cxi_product: f64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub rounds_completed: usize,
    pub ell: Option<f64>,
    pub final_theta: Option<f64>,
    pub theta_gap: Option<f64>,
    pub final_residual: Option<f64>,
    /// `t̄`; the windowed average runs over rounds `t̄+1..=T`.
    pub window_start: Option<usize>,
    pub windowed_avg_residual: Option<f64>,
    pub theorem_bound: Option<f64>,
    pub max_descent_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: Vec<CellSummary>,
}

impl SweepSummary {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(SUMMARY_JSON);
        let s = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }
}

pub fn cell_dir(root: &Path, label: &str) -> PathBuf {
    root.join("cells").join(label)
}

pub fn instance_dir(root: &Path, key: &str) -> PathBuf {
    root.join("instances").join(key)
}

fn cell_label(seed: u64, kind: EstimatorKind, cxi: f64) -> String {
    format!("s{seed}_{}_cxi{cxi}", kind.as_str())
}

struct Instance {
    key: String,
    game: QuadraticGame,
    geom: FeasibleGeometry,
    oracle: Option<OracleResult>,
}

fn instance_keys(cfg: &ExperimentConfig) -> BTreeMap<u64, (String, Option<u64>)> {
    // seed → (instance key, generator seed); a file-backed instance has no generator seed
    let mut keys = BTreeMap::new();
    for &s in &cfg.seeds {
        let entry = match (&cfg.instance_file, cfg.instance_seed) {
            (Some(_), _) => ("file".to_string(), None),
            (None, Some(i)) => (format!("seed{i}"), Some(i)),
            (None, None) => (format!("seed{s}"), Some(s)),
        };
        keys.insert(s, entry);
    }
    keys
}

fn build_instance(cfg: &ExperimentConfig, key: &str, gen_seed: Option<u64>) -> Result<(QuadraticGame, FeasibleGeometry)> {
    match (gen_seed, &cfg.instance_file) {
        (Some(s), _) => generate_instance(&InstanceSpec { seed: s, ..cfg.instance.clone() }),
        (None, Some(path)) => InstanceDocument::read(path)?.build(),
        (None, None) => Err(Error::config(format!("instance {key} has no source"))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs every cell of `cfg` into `out` and writes the sweep summary.
///
/// Cells run in parallel. A failing cell is recorded in the summary with its
/// diagnosis and does not stop the others; errors in the config, the instances or
/// the output directory abort before any cell runs.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<SweepSummary> {
    cfg.validate()?;
    create_dir(out)?;
    write_json(&out.join("config.json"), cfg)?;

    let keys = instance_keys(cfg);
    let mut distinct: BTreeMap<String, Option<u64>> = BTreeMap::new();
    for (key, gen) in keys.values() {
        distinct.insert(key.clone(), *gen);
    }
    let instances: BTreeMap<String, Instance> = distinct
        .into_par_iter()
        .map(|(key, gen)| {
            let (game, geom) = build_instance(cfg, &key, gen)?;
            let dir = instance_dir(out, &key);
            create_dir(&dir)?;
            InstanceDocument::new(&game, &geom)?.write(dir.join(INSTANCE_JSON))?;
            let oracle = match cfg.oracle_settings() {
                Some(settings) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(gen.unwrap_or(0));
                    rng.set_stream(ORACLE_STREAM);
                    let r = global_minimizer_oracle(&game, &geom, &settings, &mut rng)?;
                    write_json(&dir.join(ORACLE_JSON), &r)?;
                    Some(r)
                }
                None => None,
            };
            Ok((key.clone(), Instance { key, game, geom, oracle }))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for kind in cfg.estimators() {
            for cxi in cfg.cxi_products() {
                cells.push(Cell {
                    label: cell_label(seed, kind, cxi),
                    seed,
                    instance: keys[&seed].0.clone(),
                    estimator: kind,
                    cxi_product: cxi,
                });
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = cells.iter().find(|c| !seen.insert(&c.label)) {
        return Err(Error::config(format!("duplicate cell {}", dup.label)));
    }

    let rows: Vec<CellSummary> = cells
        .par_iter()
        .map(|cell| run_cell(cfg, out, cell, &instances[&cell.instance]))
        .collect::<Result<_>>()?;
    let summary = SweepSummary { cells: rows };
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    write_summary_csv(&out.join(SUMMARY_CSV), &summary)?;
    Ok(summary)
}

fn run_cell(cfg: &ExperimentConfig, out: &Path, cell: &Cell, inst: &Instance) -> Result<CellSummary> {
    let dir = cell_dir(out, &cell.label);
    create_dir(&dir)?;
    let theta_star_oracle = inst.oracle.as_ref().map(|o| o.theta_best);
    let outcome = simulate(cfg, cell, inst);

    let (trace, error) = match outcome {
        Ok(t) => (Some(t), None),
        Err(Error::Aborted(a)) => {
            let msg = format!("run aborted in round {}: {}", a.round, a.cause);
            (Some(a.partial), Some(msg))
        }
        Err(e) if e.is_numerical() || matches!(e, Error::Config(_) | Error::Dimension(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    if let Some(t) = &trace {
        t.write_csv(dir.join(TRACE_CSV))?;
        t.write_points_csv(dir.join(POINTS_CSV))?;
    }
    let status = if error.is_some() { CellStatus::Failed } else { CellStatus::Ok };
    write_json(
        &dir.join(META_JSON),
        &CellMeta {
            cell: cell.clone(),
            status,
            error: error.clone(),
            run: trace.as_ref().map(|t| t.meta.clone()),
            theta_star_oracle,
            config: cfg.clone(),
        },
    )?;
    let mut row = CellSummary {
        label: cell.label.clone(),
        seed: cell.seed,
        instance: inst.key.clone(),
        estimator: cell.estimator,
        cxi_product: cell.cxi_product,
        status,
        error,
        rounds_completed: trace.as_ref().map_or(0, |t| t.rounds()),
        ell: trace.as_ref().map(|t| t.meta.ell),
        final_theta: None,
        theta_gap: None,
        final_residual: None,
        window_start: None,
        windowed_avg_residual: None,
        theorem_bound: None,
        max_descent_slack: None,
    };
    if let Some(t) = trace.as_ref().filter(|t| t.rounds() > 0) {
        fill_metrics(&mut row, t, cfg.envelope_window, theta_star_oracle)?;
    }
    Ok(row)
}

fn simulate(cfg: &ExperimentConfig, cell: &Cell, inst: &Instance) -> Result<RunTrace> {
    let ell = inst.game.weak_convexity()?.ell;
    let schedule = IncentiveSchedule::from_policy(ell, cfg.policy(cell.cxi_product))?;
    let mut est = cfg.estimator_config(cell.estimator).build(&inst.game)?;
    let x0 = default_start(&inst.geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cell.seed);
    rng.set_stream(RUN_STREAM);
    run(&inst.game, &inst.geom, est.as_mut(), &schedule, &x0, &cfg.run_settings()?, &mut rng)
}

/// Window start `t̄` of a trace: where its error envelope settles.
pub fn window_start(trace: &RunTrace, envelope_window: usize) -> usize {
    let env = error_envelope(trace, envelope_window);
    stabilization_round(&env, STABILIZATION_SPAN, STABILIZATION_REL)
}

fn fill_metrics(row: &mut CellSummary, t: &RunTrace, envelope_window: usize, oracle: Option<f64>) -> Result<()> {
    let last = t.rows.last().expect("nonempty trace");
    row.final_theta = Some(last.theta);
    row.theta_gap = oracle.map(|o| last.theta - o);
    row.final_residual = Some(last.residual);
    let t_bar = window_start(t, envelope_window);
    row.window_start = Some(t_bar);
    row.windowed_avg_residual = Some(average_residual(t, t_bar + 1..=t.rounds())?);
    // θ* must lower-bound every θ_t the bound refers to; a run can beat the oracle
    let trace_min = t.thetas().into_iter().fold(f64::INFINITY, f64::min);
    let theta_star = oracle.map_or(trace_min, |o| o.min(trace_min));
    row.theorem_bound = theorem_bound(t, t_bar, theta_star).ok().map(|b| b.bound);
    row.max_descent_slack = Some(descent_check(t).max_slack());
    Ok(())
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |x| x.to_string())
}

fn write_summary_csv(path: &Path, summary: &SweepSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    w.write_record([
        "label",
        "seed",
        "instance",
        "estimator",
        "cxi_product",
        "status",
        "rounds_completed",
        "ell",
        "final_theta",
        "theta_gap",
        "final_residual",
        "window_start",
        "windowed_avg_residual",
        "theorem_bound",
        "max_descent_slack",
        "error",
    ])?;
    for c in &summary.cells {
        w.write_record([
            c.label.clone(),
            c.seed.to_string(),
            c.instance.clone(),
            c.estimator.as_str().to_string(),
            c.cxi_product.to_string(),
            if c.status == CellStatus::Ok { "ok" } else { "failed" }.to_string(),
            c.rounds_completed.to_string(),
            opt(&c.ell),
            opt(&c.final_theta),
            opt(&c.theta_gap),
            opt(&c.final_residual),
            opt(&c.window_start),
            opt(&c.windowed_avg_residual),
            opt(&c.theorem_bound),
            opt(&c.max_descent_slack),
            opt(&c.error),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
