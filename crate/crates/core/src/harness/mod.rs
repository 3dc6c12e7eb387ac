//! Random instances, experiment sweeps and their artifacts.
//!
//! A sweep directory looks like
//!
//! ```text
//! config.json
//! instances/<key>/{instance.json, oracle.json}
//! cells/<label>/{trace.csv, points.csv, meta.json, tracking.csv}
//! summary.{json,csv}
//! report.{json,txt}
//! ```
//!
//! `tracking.csv` and the report files are written by [`report`]; everything else by
//! [`run_experiment`].

mod config;
mod instance;
mod report;
mod sweep;

pub use config::{resolve_output_dir, ExperimentConfig, OneOrMany, OUTPUT_ROOT_ENV};
pub use instance::{generate_instance, Coupling, InstanceDocument, InstanceSpec};
pub use report::{median, render_table, report, CellReport, GroupReport, Report, REPORT_JSON, REPORT_TXT, TRACKING_CSV};
pub use sweep::{
    cell_dir, instance_dir, run_experiment, window_start, Cell, CellMeta, CellStatus, CellSummary, SweepSummary,
    INSTANCE_JSON, META_JSON, ORACLE_JSON, POINTS_CSV, STABILIZATION_REL, STABILIZATION_SPAN, SUMMARY_CSV,
    SUMMARY_JSON, TRACE_CSV,
};
