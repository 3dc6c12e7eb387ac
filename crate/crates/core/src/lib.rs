//! Incentive-driven coordination of agents in a quadratic generalized Nash game.
//!
//! A coordinator wants the agents' equilibrium to minimize the game's potential but
//! only sees noisy cost reports. Each outer round it publishes quadratic incentives
//! anchored at a gradient step, the agents settle on the incentivized equilibrium,
//! and the coordinator refines its estimate of the pseudo-gradient from the reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod game;
pub mod harness;
pub mod geometry;
pub mod incentive;
pub mod linalg;
pub mod oracle;
pub mod orchestrator;
pub mod vi;

pub use error::{AbortedRun, Error, NumericalFailure, Result};
pub use estimator::{
    EstimatorConfig, EstimatorKind, FeedbackSample, GaussianProcessEstimator, GradientEstimator,
    LeastSquaresEstimator, NoiseModel, PerfectEstimator, ReconstructionDiagnostics,
};
pub use game::QuadraticGame;
pub use geometry::FeasibleGeometry;
pub use incentive::{AffineMap, IncentiveSchedule, IncentiveState, RoundParams, SchedulePolicy};
pub use vi::{solve_vgne, SolverParams, VgneSolution};
pub use oracle::{global_minimizer_oracle, OracleResult, OracleSettings};
pub use orchestrator::{run, RunSettings, RunTrace, TraceRow};
