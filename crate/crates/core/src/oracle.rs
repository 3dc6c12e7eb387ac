//! Reference minimizer of the potential over `Ω`.
//!
//! The potential may be nonconvex, so the result is only the best stationary point
//! found from a number of starts: an upper bound on `min θ`, never a certificate.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::QuadraticGame;
use crate::geometry::FeasibleGeometry;
use crate::orchestrator::{random_feasible_point, stationarity_residual};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub starts: usize,
    /// Stop a start once its stationarity residual is at most this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings { starts: 20, tol: 1e-9, max_iters: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub x_best: Vec<f64>,
    pub theta_best: f64,
    /// Stationarity residual at `x_best`.
    pub residual: f64,
    pub starts: usize,
    /// Starts that reached the tolerance.
    pub converged: usize,
}

impl OracleResult {
    pub fn x_best(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_best)
    }
}

const ARMIJO: f64 = 1e-4;

/// Projected gradient with Armijo backtracking along the projection arc.
fn descend(
    game: &QuadraticGame,
    geom: &FeasibleGeometry,
    x0: DVector<f64>,
    settings: &OracleSettings,
    base_step: f64,
) -> Result<(DVector<f64>, f64, bool)> {
    let mut x = x0;
    let mut theta = game.potential(&x)?;
    let mut step = base_step;
    for k in 0..settings.max_iters {
        if k % 10 == 0 && stationarity_residual(game, geom, &x, 1.0)?.residual <= settings.tol {
            return Ok((x, theta, true));
        }
        let g = game.pseudo_gradient(&x)?;
        let mut s = step;
        loop {
            let y = geom.project(&(&x - &g * s), 1e-13)?;
            let ty = game.potential(&y)?;
            if ty <= theta + ARMIJO * g.dot(&(&y - &x)) || s < 1e-16 {
                let moved = (&y - &x).norm();
                x = y;
                theta = ty;
                step = (s * 2.0).min(1e3 * base_step);
                if moved == 0.0 {
                    let r = stationarity_residual(game, geom, &x, 1.0)?.residual;
                    return Ok((x, theta, r <= settings.tol));
                }
                break;
            }
            s *= 0.5;
        }
    }
    let r = stationarity_residual(game, geom, &x, 1.0)?.residual;
    Ok((x, theta, r <= settings.tol))
}

/// Multi-start projected gradient on `θ` from uniformly drawn feasible points.
pub fn global_minimizer_oracle<R: Rng + ?Sized>(
    game: &QuadraticGame,
    geom: &FeasibleGeometry,
    settings: &OracleSettings,
    rng: &mut R,
) -> Result<OracleResult> {
    if settings.starts == 0 {
        return Err(Error::config("the oracle needs at least one start"));
    }
    if geom.dim() != game.dim() {
        return Err(Error::dim("game and feasible set disagree in dimension"));
    }
    let base_step = 1.0 / (game.spectral_norm()? + 1e-12);
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut converged = 0;
    for _ in 0..settings.starts {
        let x0 = random_feasible_point(geom, rng)?;
        let (x, theta, ok) = descend(game, geom, x0, settings, base_step)?;
        converged += ok as usize;
        if best.as_ref().is_none_or(|(_, t)| theta < *t) {
            best = Some((x, theta));
        }
    }
    let (x, theta) = best.expect("at least one start");
    let residual = stationarity_residual(game, geom, &x, 1.0)?.residual;
    Ok(OracleResult {
        x_best: x.iter().copied().collect(),
        theta_best: theta,
        residual,
        starts: settings.starts,
        converged,
    })
}
