//! The outer loop: publish incentives, let the agents settle, learn from their reports.
//!
//! Round `t` anchors every agent at `x*_{t−1} + ξ_t Ĝ_{t−1}(x*_{t−1})`, solves the
//! incentive-augmented game for `x*_t`, collects the cost reports at `x*_t`, and
//! refreshes the estimate. The trace keeps everything the analysis needs afterwards.

use std::ops::RangeInclusive;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AbortedRun, Error, Result};
use crate::estimator::{feedback, EstimatorKind, GradientEstimator, NoiseModel, ReconstructionDiagnostics};
use crate::game::QuadraticGame;
use crate::geometry::FeasibleGeometry;
use crate::incentive::{IncentiveSchedule, IncentiveState};
use crate::vi::{solve_vgne, SolverParams};

/// Feasibility tolerance for the points stored in a trace.
pub const TRACE_FEASIBILITY_TOL: f64 = 1e-8;

/// One line of the trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub theta: f64,
    /// `‖x*_t − x*_{t−1}‖`, zero in row 0.
    pub residual: f64,
    /// Mean of `residual` over rounds `1..=t`, zero in row 0.
    pub avg_residual_cum: f64,
    /// `‖Ĝ_t(x*_t) − G(x*_t)‖` for the estimate that drives round `t + 1`.
    pub eps_measured: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
    pub inner_iters: usize,
    /// `θ(x*_t) − θ(x*_{t−1}) + β_t‖Δ*_t‖²`
    pub descent_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub estimator: EstimatorKind,
    pub ell: f64,
    pub gain: f64,
    pub step: f64,
    pub rounds: usize,
    pub noise: NoiseModel,
    pub probe_count: usize,
    pub step_clamped: bool,
}

/// Rows `0..=T` and the matching points `x*_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub meta: RunMeta,
    pub rows: Vec<TraceRow>,
    pub points: Vec<DVector<f64>>,
}

impl RunTrace {
    /// Number of completed outer rounds.
    pub fn rounds(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.theta).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eps_measured).collect()
    }

    pub fn final_point(&self) -> &DVector<f64> {
        self.points.last().expect("a trace always holds x*_0")
    }

    /// First round whose residual is at most `tol`.
    pub fn first_round_below(&self, tol: f64) -> Option<usize> {
        self.rows.iter().skip(1).find(|r| r.residual <= tol).map(|r| r.t)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Points as CSV: `t` followed by one column per coordinate.
    pub fn write_points_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let n = self.points.first().map_or(0, |p| p.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (t, p) in self.points.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Reads a trace CSV written by [`RunTrace::write_csv`].
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Reads the points CSV written by [`RunTrace::write_points_csv`].
pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<DVector<f64>>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        out.push(DVector::from_vec(vals));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub rounds: usize,
    pub noise: NoiseModel,
    /// Extra cost reports per round at random feasible points.
    pub probe_count: usize,
    pub solver: SolverParams,
    /// Trailing window of the reconstruction error envelope.
    pub envelope_window: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            rounds: 100,
            noise: NoiseModel::exact(),
            probe_count: 0,
            solver: SolverParams::default(),
            envelope_window: 10,
        }
    }
}

/// Default `x*_0`: the projection of the origin onto `Ω`.
pub fn default_start(geom: &FeasibleGeometry) -> Result<DVector<f64>> {
    geom.project(&DVector::zeros(geom.dim()), 1e-12)
}

const SAMPLER_SWEEPS: usize = 10;

/// A random point of `Ω` from coordinate hit-and-run: starting at the projected
/// origin, each sweep redraws every coordinate uniformly on the segment the other
/// coordinates leave feasible. Infinite bounds are replaced by a unit window.
pub fn random_feasible_point<R: Rng + ?Sized>(geom: &FeasibleGeometry, rng: &mut R) -> Result<DVector<f64>> {
    let (lo, hi) = (geom.lower(), geom.upper());
    let (a, b) = (geom.coupling(), geom.resources());
    let mut x = default_start(geom)?;
    let mut slack = b - a * &x;
    for _ in 0..SAMPLER_SWEEPS {
        for k in 0..x.len() {
            let mut l = if lo[k].is_finite() { lo[k] } else { x[k] - 1.0 };
            let mut u = if hi[k].is_finite() { hi[k] } else { x[k] + 1.0 };
            for r in 0..a.nrows() {
                let c = a[(r, k)];
                let room = slack[r].max(0.0);
                if c > 0.0 {
                    u = u.min(x[k] + room / c);
                } else if c < 0.0 {
                    l = l.max(x[k] + room / c);
                }
            }
            if u <= l {
                continue;
            }
            let v = rng.random_range(l..=u);
            for r in 0..a.nrows() {
                slack[r] -= a[(r, k)] * (v - x[k]);
            }
            x[k] = v;
        }
        slack = b - a * &x;
    }
    if geom.is_feasible(&x, 0.0) { Ok(x) } else { geom.project(&x, 1e-12) }
}

/// Runs `settings.rounds` outer rounds from `x0`.
///
/// The estimator sees the reports from `x0` before round 1. An inner solver failure
/// returns [`Error::Aborted`] with the rounds completed so far.
pub fn run<R: Rng + ?Sized>(
    game: &QuadraticGame,
    geom: &FeasibleGeometry,
    estimator: &mut dyn GradientEstimator,
    schedule: &IncentiveSchedule,
    x0: &DVector<f64>,
    settings: &RunSettings,
    rng: &mut R,
) -> Result<RunTrace> {
    game.ensure_admissible()?;
    if geom.dim() != game.dim() || x0.len() != game.dim() {
        return Err(Error::dim("game, feasible set and start point disagree in dimension"));
    }
    if !geom.is_feasible(x0, TRACE_FEASIBILITY_TOL) {
        return Err(Error::config(format!(
            "start point violates the constraints by {:.3e}",
            geom.violation(x0)
        )));
    }
    let first = schedule.params(1);
    let meta = RunMeta {
        estimator: estimator.kind(),
        ell: schedule.ell(),
        gain: first.gain,
        step: first.step,
        rounds: settings.rounds,
        noise: settings.noise,
        probe_count: settings.probe_count,
        step_clamped: schedule.step_clamped(),
    };
    let mut diag = ReconstructionDiagnostics::new(settings.envelope_window);

    let observe_round = |est: &mut dyn GradientEstimator, x: &DVector<f64>, t: usize, rng: &mut R| -> Result<()> {
        est.observe(&feedback(game, x, t, &settings.noise, rng)?)?;
        for _ in 0..settings.probe_count {
            let p = random_feasible_point(geom, rng)?;
            est.observe(&feedback(game, &p, t, &settings.noise, rng)?)?;
        }
        Ok(())
    };

    observe_round(estimator, x0, 0, rng)?;
    let mut ghat = estimator.estimate_gradient(x0)?;
    let eps0 = (&ghat - game.pseudo_gradient(x0)?).norm();
    diag.record(eps0);
    let p0 = schedule.params(0);
    let mut trace = RunTrace {
        meta,
        rows: vec![TraceRow {
            t: 0,
            theta: game.potential(x0)?,
            residual: 0.0,
            avg_residual_cum: 0.0,
            eps_measured: eps0,
            alpha: p0.alpha,
            kappa: p0.kappa,
            beta: p0.beta,
            inner_iters: 0,
            descent_slack: 0.0,
        }],
        points: vec![x0.clone()],
    };

    let mut residual_sum = 0.0;
    for t in 1..=settings.rounds {
        let x_prev = trace.final_point().clone();
        let state = IncentiveState { round: t, x_prev: x_prev.clone(), ghat_prev: ghat.clone() };
        let step = state
            .extended_mapping(game, schedule)
            .and_then(|map| solve_vgne(&map, geom, &settings.solver, &x_prev));
        let sol = match step {
            Ok(s) => s,
            Err(cause) => {
                return Err(Error::Aborted(Box::new(AbortedRun { round: t, cause, partial: trace })));
            }
        };
        let x = sol.x_star;
        let step_result = observe_round(estimator, &x, t, rng)
            .and_then(|_| estimator.estimate_gradient(&x))
            .and_then(|g| Ok((game.pseudo_gradient(&x)?, g)));
        let (g_true, g_hat) = match step_result {
            Ok(v) => v,
            Err(cause) => {
                return Err(Error::Aborted(Box::new(AbortedRun { round: t, cause, partial: trace })));
            }
        };
        let eps = (&g_hat - g_true).norm();
        diag.record(eps);
        ghat = g_hat;

        let p = schedule.params(t);
        let theta = game.potential(&x)?;
        let residual = (&x - &x_prev).norm();
        residual_sum += residual;
        let theta_prev = trace.rows[t - 1].theta;
        trace.rows.push(TraceRow {
            t,
            theta,
            residual,
            avg_residual_cum: residual_sum / t as f64,
            eps_measured: eps,
            alpha: p.alpha,
            kappa: p.kappa,
            beta: p.beta,
            inner_iters: sol.iters,
            descent_slack: theta - theta_prev + p.beta * residual * residual,
        });
        trace.points.push(x);
    }
    Ok(trace)
}

/// Mean residual over the rounds in `window`.
pub fn average_residual(trace: &RunTrace, window: RangeInclusive<usize>) -> Result<f64> {
    average_of(&trace.residuals(), window)
}

pub(crate) fn average_of(residuals: &[f64], window: RangeInclusive<usize>) -> Result<f64> {
    let (a, b) = (*window.start(), *window.end());
    if a > b {
        return Err(Error::config("empty averaging window"));
    }
    if b >= residuals.len() {
        return Err(Error::config(format!(
            "window ends at round {b} but the trace has {} rows",
            residuals.len()
        )));
    }
    Ok(residuals[a..=b].iter().sum::<f64>() / (b - a + 1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityCertificate {
    pub x: DVector<f64>,
    pub residual: f64,
    pub scaling: f64,
}

/// `‖x − Π_Ω(x − γ w (Qx + q))‖` with `γ = 1/(w(‖Q‖ + 1))`; zero exactly at the
/// stationary points of the potential over `Ω`.
pub fn stationarity_residual(
    game: &QuadraticGame,
    geom: &FeasibleGeometry,
    x: &DVector<f64>,
    w: f64,
) -> Result<StationarityCertificate> {
    if !(w > 0.0) {
        return Err(Error::config(format!("stationarity scaling must be positive, got {w}")));
    }
    let gamma = 1.0 / (w * (game.spectral_norm()? + 1.0));
    let g = game.pseudo_gradient(x)?;
    let p = geom.project(&(x - g * (gamma * w)), 1e-13)?;
    Ok(StationarityCertificate { x: x.clone(), residual: (x - p).norm(), scaling: w })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentEntry {
    pub t: usize,
    /// `θ_t − θ_{t−1} + β_t‖Δ*_t‖²`; nonpositive when the estimate is exact.
    pub slack: f64,
    /// `θ_t − θ_{t−1} + β_t(‖Δ*_t‖ − κ_t e/β_t)² − κ_t² e²/β_t` with `e = ‖ε_{t−1}‖`;
    /// nonpositive for any estimate.
    pub inexact_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentReport {
    pub entries: Vec<DescentEntry>,
}

impl DescentReport {
    pub fn max_slack(&self) -> f64 {
        self.entries.iter().map(|e| e.slack).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_inexact_slack(&self) -> f64 {
        self.entries.iter().map(|e| e.inexact_slack).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-round slack of the sufficient-decrease inequalities along a trace.
pub fn descent_check(trace: &RunTrace) -> DescentReport {
    let entries = trace
        .rows
        .windows(2)
        .map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            let d = cur.residual;
            let dtheta = cur.theta - prev.theta;
            let e = prev.eps_measured;
            let inexact_slack = if cur.beta > 0.0 {
                let shift = cur.kappa * e / cur.beta;
                dtheta + cur.beta * (d - shift).powi(2) - cur.kappa * cur.kappa * e * e / cur.beta
            } else {
                dtheta - 2.0 * cur.kappa * e * d
            };
            DescentEntry { t: cur.t, slack: dtheta + cur.beta * d * d, inexact_slack }
        })
        .collect();
    DescentReport { entries }
}

/// First round `t̄` after which the error envelope moves by less than `rel` (relative)
/// over `span` rounds. Falls back to 0 when the envelope never settles inside the trace.
pub fn stabilization_round(envelope: &[f64], span: usize, rel: f64) -> usize {
    (0..envelope.len().saturating_sub(span))
        .find(|&t| envelope[t] - envelope[t + span] <= rel * envelope[t])
        .unwrap_or(0)
}

/// Error envelope of a trace's measured errors.
pub fn error_envelope(trace: &RunTrace, window: usize) -> Vec<f64> {
    let mut diag = ReconstructionDiagnostics::new(window);
    trace.rows.iter().for_each(|r| diag.record(r.eps_measured));
    diag.envelope().to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBound {
    pub t_bar: usize,
    pub window_len: usize,
    /// `θ(x*_{t̄}) − θ*`
    pub gap: f64,
    pub beta_sum: f64,
    pub beta_min: f64,
    pub bound: f64,
    /// The measured average residual over rounds `t̄+1..=T`.
    pub average: f64,
}

/// Bound on the average residual over rounds `t̄+1..=T`:
///
/// ```text
/// (1/(T β_min)) √(Σ_t β_t Δ + β̄ κ_t² e_{t−1}² / β_t) + (1/(T β_min)) Σ_t κ_t e_{t−1}
/// ```
///
/// with `Δ = θ(x*_{t̄}) − θ*`, `β̄ = Σ β_t`, `T` the window length and `e_{t−1}` the
/// measured error of the estimate used in round `t`.
pub fn theorem_bound(trace: &RunTrace, t_bar: usize, theta_star: f64) -> Result<TheoremBound> {
    let rows = &trace.rows;
    if t_bar >= trace.rounds() {
        return Err(Error::config(format!(
            "t̄ = {t_bar} leaves no rounds in a trace of {} rounds",
            trace.rounds()
        )));
    }
    let gap = rows[t_bar].theta - theta_star;
    if gap < 0.0 {
        return Err(Error::config(format!(
            "θ* = {theta_star} exceeds θ(x*_t̄) = {}",
            rows[t_bar].theta
        )));
    }
    let window = &rows[t_bar + 1..];
    let len = window.len() as f64;
    let beta_sum: f64 = window.iter().map(|r| r.beta).sum();
    let beta_min = window.iter().map(|r| r.beta).fold(f64::INFINITY, f64::min);
    if !(beta_min > 0.0) {
        return Err(Error::config("the bound needs ℓ > 0"));
    }
    let mut under_root = 0.0;
    let mut linear = 0.0;
    for (k, r) in window.iter().enumerate() {
        let e = rows[t_bar + k].eps_measured;
        under_root += r.beta * gap + beta_sum * r.kappa * r.kappa * e * e / r.beta;
        linear += r.kappa * e;
    }
    let bound = (under_root.sqrt() + linear) / (len * beta_min);
    let average = average_of(&trace.residuals(), t_bar + 1..=trace.rounds())?;
    Ok(TheoremBound {
        t_bar,
        window_len: window.len(),
        gap,
        beta_sum,
        beta_min,
        bound,
        average,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorConfig, PerfectEstimator};
    use crate::game::tests::game_a;
    use crate::geometry::tests::simplex_like;
    use crate::incentive::SchedulePolicy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn game_a_run(rounds: usize, cxi: f64) -> RunTrace {
        let g = game_a();
        let geom = simplex_like();
        let ell = g.weak_convexity().unwrap().ell;
        let sched = IncentiveSchedule::from_policy(ell, SchedulePolicy { c_factor: 2.0, cxi_product: cxi }).unwrap();
        let mut est = PerfectEstimator::new(g.clone());
        let settings = RunSettings { rounds, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run(&g, &geom, &mut est, &sched, &v(&[0.0, 0.0]), &settings, &mut rng).unwrap()
    }

    #[test]
    fn game_a_descends_to_the_facet_point() {
        let trace = game_a_run(200, 0.5);
        assert_eq!(trace.rows.len(), 201);
        for w in trace.thetas().windows(2) {
            assert!(w[1] <= w[0] + 1e-8);
        }
        assert!(trace.rows.last().unwrap().residual <= 1e-6);
        let cert = stationarity_residual(&game_a(), &simplex_like(), trace.final_point(), 1.0).unwrap();
        assert!(cert.residual <= 1e-6);
        assert!(descent_check(&trace).max_slack() <= 1e-9);
    }

    #[test]
    fn zero_rounds_keeps_only_the_start() {
        let trace = game_a_run(0, 0.5);
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.points[0], v(&[0.0, 0.0]));
        assert!(descent_check(&trace).entries.is_empty());
    }

    #[test]
    fn runs_are_deterministic() {
        let g = game_a();
        let geom = simplex_like();
        let sched = IncentiveSchedule::from_policy(3.0, SchedulePolicy::default()).unwrap();
        let settings = RunSettings {
            rounds: 15,
            noise: NoiseModel::new(0.0, 0.5).unwrap(),
            probe_count: 2,
            ..Default::default()
        };
        let go = || {
            let mut est = EstimatorConfig::new(EstimatorKind::LeastSquares).build(&g).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            run(&g, &geom, est.as_mut(), &sched, &v(&[0.0, 0.0]), &settings, &mut rng).unwrap()
        };
        let (a, b) = (go(), go());
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_start_rejected() {
        let g = game_a();
        let sched = IncentiveSchedule::from_policy(3.0, SchedulePolicy::default()).unwrap();
        let mut est = PerfectEstimator::new(g.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = run(&g, &simplex_like(), &mut est, &sched, &v(&[0.9, 0.9]), &RunSettings::default(), &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn inner_failure_returns_partial_trace() {
        let g = game_a();
        let sched = IncentiveSchedule::from_policy(3.0, SchedulePolicy::default()).unwrap();
        let mut est = PerfectEstimator::new(g.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let settings = RunSettings {
            rounds: 5,
            solver: SolverParams { max_iters: 1, tol: 0.0, ..Default::default() },
            ..Default::default()
        };
        match run(&g, &simplex_like(), &mut est, &sched, &v(&[0.0, 0.0]), &settings, &mut rng) {
            Err(Error::Aborted(a)) => {
                assert_eq!(a.round, 1);
                assert_eq!(a.partial.rows.len(), 1);
                assert!(a.cause.is_numerical());
            }
            other => panic!("expected an aborted run, got {other:?}"),
        }
    }

    #[test]
    fn average_residual_examples() {
        let r = [0.0, 1.0, 0.5, 0.25, 0.25];
        assert_eq!(average_of(&r, 1..=4).unwrap(), 0.5);
        assert_eq!(average_of(&r, 2..=2).unwrap(), 0.5);
        #[allow(clippy::reversed_empty_ranges)]
        let empty = average_of(&r, 3..=2);
        assert!(empty.is_err());
        assert!(average_of(&r, 0..=5).is_err());
    }

    #[test]
    fn stationarity_examples() {
        let g = game_a();
        let geom = simplex_like();
        assert!(stationarity_residual(&g, &geom, &v(&[0.5, 0.5]), 1.0).unwrap().residual < 1e-12);
        assert!(stationarity_residual(&g, &geom, &v(&[0.5, 0.5]), 10.0).unwrap().residual < 1e-12);
        let off = v(&[0.2, 0.3]);
        assert!(stationarity_residual(&g, &geom, &off, 1.0).unwrap().residual > 1e-3);
        assert!(stationarity_residual(&g, &geom, &off, 10.0).unwrap().residual > 1e-3);
        // interior stationary point of a convex game
        let convex = QuadraticGame::from_dense(
            vec![1, 1],
            nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]),
            v(&[-0.5, -0.5]),
        )
        .unwrap();
        assert!(stationarity_residual(&convex, &geom, &v(&[0.25, 0.25]), 1.0).unwrap().residual < 1e-14);
    }

    #[test]
    fn perfect_bound_is_the_square_root_form() {
        let trace = game_a_run(50, 0.5);
        let theta_star = -1.25;
        let b = theorem_bound(&trace, 0, theta_star).unwrap();
        let beta = trace.rows[1].beta;
        let expected = ((trace.rows[0].theta - theta_star) / (50.0 * beta)).sqrt();
        assert!((b.bound - expected).abs() < 1e-12);
        assert!(b.average <= b.bound);
    }

    #[test]
    fn bound_rejects_theta_star_above_start() {
        let trace = game_a_run(5, 0.5);
        assert!(theorem_bound(&trace, 0, 1.0).is_err());
    }

    #[test]
    fn stabilization_examples() {
        assert_eq!(stabilization_round(&[0.0; 30], 10, 0.05), 0);
        let mut env: Vec<f64> = (0..20).map(|t| 1.0 / (1.0 + t as f64)).collect();
        env.extend(std::iter::repeat_n(0.05, 20));
        let t = stabilization_round(&env, 10, 0.05);
        assert!(env[t] - env[t + 10] <= 0.05 * env[t]);
        assert!(t > 0);
        assert_eq!(stabilization_round(&[1.0, 0.5], 10, 0.05), 0);
    }

    #[test]
    fn descent_check_on_a_still_round() {
        let mut trace = game_a_run(3, 0.5);
        let last = trace.rows.len() - 1;
        trace.rows[last].theta = trace.rows[last - 1].theta;
        trace.rows[last].residual = 0.0;
        assert_eq!(descent_check(&trace).entries.last().unwrap().slack, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let trace = game_a_run(10, 0.5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        trace.write_csv(&p).unwrap();
        assert_eq!(read_trace_csv(&p).unwrap(), trace.rows);
        let header = std::fs::read_to_string(&p).unwrap().lines().next().unwrap().to_string();
        assert_eq!(
            header,
            "t,theta,residual,avg_residual_cum,eps_measured,alpha,kappa,beta,inner_iters,descent_slack"
        );
        let q = dir.path().join("points.csv");
        trace.write_points_csv(&q).unwrap();
        assert_eq!(read_points_csv(&q).unwrap(), trace.points);
    }
}
