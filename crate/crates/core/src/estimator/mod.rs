//! The coordinator's learning procedure.
//!
//! After every outer round each agent reports a noisy reading of its own cost at the
//! equilibrium just computed. An estimator turns that history into an estimate of the
//! pseudo-gradient, which the coordinator needs to place the next incentive anchors.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::QuadraticGame;

mod gaussian_process;
mod least_squares;

pub use gaussian_process::GaussianProcessEstimator;
pub use least_squares::LeastSquaresEstimator;

/// Costs reported by all agents at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSample {
    pub round: usize,
    pub x: DVector<f64>,
    /// `p_i = J_i(x) + ε_i`, one per agent.
    pub costs: Vec<f64>,
}

/// Additive Gaussian noise on the reported costs, independent across agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mean: f64,
    pub variance: f64,
}

impl NoiseModel {
    pub fn exact() -> Self {
        NoiseModel { mean: 0.0, variance: 0.0 }
    }

    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() {
            return Err(Error::config(format!("invalid noise model: mean {mean}, variance {variance}")));
        }
        Ok(NoiseModel { mean, variance })
    }
}

/// Agents' noisy cost reports at `x`.
pub fn feedback<R: Rng + ?Sized>(
    game: &QuadraticGame,
    x: &DVector<f64>,
    round: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<FeedbackSample> {
    let mut costs = game.agent_costs(x)?;
    if noise.variance > 0.0 {
        let dist = Normal::new(noise.mean, noise.variance.sqrt())
            .map_err(|e| Error::config(format!("noise model: {e}")))?;
        for c in costs.iter_mut() {
            *c += dist.sample(rng);
        }
    } else if noise.mean != 0.0 {
        costs.iter_mut().for_each(|c| *c += noise.mean);
    }
    Ok(FeedbackSample { round, x: x.clone(), costs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "perfect")]
    Perfect,
    #[serde(rename = "ls")]
    LeastSquares,
    #[serde(rename = "gp")]
    GaussianProcess,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Perfect => "perfect",
            EstimatorKind::LeastSquares => "ls",
            EstimatorKind::GaussianProcess => "gp",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(EstimatorKind::Perfect),
            "ls" => Ok(EstimatorKind::LeastSquares),
            "gp" => Ok(EstimatorKind::GaussianProcess),
            other => Err(Error::config(format!("unknown estimator \"{other}\" (expected perfect, ls or gp)"))),
        }
    }
}

/// A learner mapping feedback history to pseudo-gradient estimates.
///
/// `estimate_gradient` must be a deterministic function of the observed history. A
/// learner that has seen nothing returns the zero vector.
pub trait GradientEstimator: Send {
    fn kind(&self) -> EstimatorKind;

    fn observe(&mut self, sample: &FeedbackSample) -> Result<()>;

    fn estimate_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Number of samples currently used for fitting.
    fn history_len(&self) -> usize;
}

/// Simulation shortcut that knows the true game.
#[derive(Debug, Clone)]
pub struct PerfectEstimator {
    game: QuadraticGame,
    seen: usize,
}

impl PerfectEstimator {
    pub fn new(game: QuadraticGame) -> Self {
        PerfectEstimator { game, seen: 0 }
    }
}

impl GradientEstimator for PerfectEstimator {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Perfect
    }

    fn observe(&mut self, _sample: &FeedbackSample) -> Result<()> {
        self.seen += 1;
        Ok(())
    }

    fn estimate_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.game.pseudo_gradient(x)
    }

    fn history_len(&self) -> usize {
        self.seen
    }
}

/// Settings from which an estimator is built for a particular game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub ridge: f64,
    pub gp_length_scale: f64,
    pub gp_signal_scale: f64,
    /// Observation noise variance assumed by the Gaussian process.
    pub gp_noise_variance: f64,
    /// Fit on the most recent samples only.
    pub window: Option<usize>,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        EstimatorConfig {
            kind,
            ridge: 1e-6,
            gp_length_scale: 50.0,
            gp_signal_scale: 100.0,
            gp_noise_variance: 0.0,
            window: None,
        }
    }

    /// The true game is only read by the perfect variant; the learners see its
    /// block dimensions and nothing else.
    pub fn build(&self, game: &QuadraticGame) -> Result<Box<dyn GradientEstimator>> {
        if self.window == Some(0) {
            return Err(Error::config("estimator window must be positive"));
        }
        Ok(match self.kind {
            EstimatorKind::Perfect => Box::new(PerfectEstimator::new(game.clone())),
            EstimatorKind::LeastSquares => {
                Box::new(LeastSquaresEstimator::new(game.dims().to_vec(), self.ridge, self.window)?)
            }
            EstimatorKind::GaussianProcess => Box::new(GaussianProcessEstimator::new(
                game.dims().to_vec(),
                self.gp_length_scale,
                self.gp_signal_scale,
                self.gp_noise_variance,
                self.window,
            )?),
        })
    }
}

/// Measured reconstruction errors `‖Ĝ_t(x*_t) − G(x*_t)‖` and their envelope.
///
/// The envelope is `e(t) = min(e(t−1), max of the last `window` errors)`, nonincreasing
/// by construction. It is an empirical summary, not a probabilistic bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionDiagnostics {
    window: usize,
    errors: Vec<f64>,
    envelope: Vec<f64>,
}

impl ReconstructionDiagnostics {
    pub fn new(window: usize) -> Self {
        ReconstructionDiagnostics {
            window: window.max(1),
            errors: Vec::new(),
            envelope: Vec::new(),
        }
    }

    pub fn record(&mut self, err: f64) {
        self.errors.push(err);
        let start = self.errors.len().saturating_sub(self.window);
        let trailing = self.errors[start..].iter().copied().fold(0.0, f64::max);
        let e = match self.envelope.last() {
            Some(prev) => prev.min(trailing),
            None => trailing,
        };
        self.envelope.push(e);
    }

    /// Measures the estimator against the true game at `x` and records the error.
    pub fn measure(&mut self, game: &QuadraticGame, est: &dyn GradientEstimator, x: &DVector<f64>) -> Result<f64> {
        let err = (est.estimate_gradient(x)? - game.pseudo_gradient(x)?).norm();
        self.record(err);
        Ok(err)
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn envelope(&self) -> &[f64] {
        &self.envelope
    }
}
