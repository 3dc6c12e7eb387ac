//! Personalized incentives and the gain/step schedule.
//!
//! At round `t` agent `i` is charged the extra cost `½ c_t ‖x_i − x⁺_{i,t}‖²` with the
//! anchor `x⁺_t = x*_{t−1} + ξ_t Ĝ_{t−1}(x*_{t−1})`. The incentive-augmented game has
//! the affine mapping `Ḡ_t(x) = (Q + c_t I) x + q − c_t x⁺_t`, which is `ℓ`-strongly
//! monotone whenever `c_t ≥ 2ℓ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::QuadraticGame;

/// Gain used in place of `2ℓ` when `ℓ = 0`.
pub const GAIN_FLOOR: f64 = 1e-6;
/// Largest admissible `c_t ξ_t`; configured steps above it are clamped.
pub const MAX_GAIN_STEP_PRODUCT: f64 = 0.999;

/// How to derive a constant schedule from `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePolicy {
    /// `c = c_factor · ℓ`; must be at least 2.
    pub c_factor: f64,
    /// `c · ξ`, in `[0, 1)`.
    pub cxi_product: f64,
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        SchedulePolicy { c_factor: 2.0, cxi_product: 0.5 }
    }
}

/// Everything the analysis needs about one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundParams {
    pub gain: f64,
    pub step: f64,
    /// `α = 1 − cξ`
    pub alpha: f64,
    /// `κ = (1 − α) / 2α`
    pub kappa: f64,
    /// `β = ℓ (2 − α) / 2α`
    pub beta: f64,
}

impl RoundParams {
    fn new(ell: f64, gain: f64, step: f64) -> Self {
        let alpha = 1.0 - gain * step;
        RoundParams {
            gain,
            step,
            alpha,
            kappa: (1.0 - alpha) / (2.0 * alpha),
            beta: ell * (2.0 - alpha) / (2.0 * alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
enum Rounds {
    Constant { gain: f64, step: f64 },
    /// Entry `t − 1` holds round `t`; the last entry repeats afterwards.
    Explicit(Vec<(f64, f64)>),
}

/// The `(c_t, ξ_t)` sequence together with the `ℓ` it was built for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncentiveSchedule {
    ell: f64,
    rounds: Rounds,
    step_clamped: bool,
}

impl IncentiveSchedule {
    /// Constant schedule `c = c_factor · ℓ`, `ξ = cxi_product / c`.
    pub fn from_policy(ell: f64, policy: SchedulePolicy) -> Result<Self> {
        if !(ell >= 0.0) {
            return Err(Error::config(format!("weak convexity constant must be nonnegative, got {ell}")));
        }
        if !(policy.c_factor >= 2.0) {
            return Err(Error::config(format!("c_factor must be at least 2, got {}", policy.c_factor)));
        }
        if !(0.0..1.0).contains(&policy.cxi_product) {
            return Err(Error::config(format!(
                "cxi_product must lie in [0, 1), got {}",
                policy.cxi_product
            )));
        }
        let gain = (policy.c_factor * ell).max(GAIN_FLOOR);
        Ok(IncentiveSchedule {
            ell,
            rounds: Rounds::Constant { gain, step: policy.cxi_product / gain },
            step_clamped: false,
        })
    }

    /// Constant schedule from a gain and a step given directly. A step with
    /// `c·ξ ≥ 1` is clamped to `0.999 / c`.
    pub fn constant(ell: f64, gain: f64, step: f64) -> Result<Self> {
        let (gain, step, clamped) = check_round(ell, gain, step)?;
        Ok(IncentiveSchedule {
            ell,
            rounds: Rounds::Constant { gain, step },
            step_clamped: clamped,
        })
    }

    /// Time-varying schedule; `rounds[t − 1]` is `(c_t, ξ_t)`.
    pub fn explicit(ell: f64, rounds: Vec<(f64, f64)>) -> Result<Self> {
        if rounds.is_empty() {
            return Err(Error::config("an explicit schedule needs at least one round"));
        }
        let mut clamped_any = false;
        let mut checked = Vec::with_capacity(rounds.len());
        for (c, xi) in rounds {
            let (c, xi, clamped) = check_round(ell, c, xi)?;
            clamped_any |= clamped;
            checked.push((c, xi));
        }
        Ok(IncentiveSchedule {
            ell,
            rounds: Rounds::Explicit(checked),
            step_clamped: clamped_any,
        })
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Whether some configured step had to be clamped below `1/c`.
    pub fn step_clamped(&self) -> bool {
        self.step_clamped
    }

    pub fn params(&self, t: usize) -> RoundParams {
        let (gain, step) = match &self.rounds {
            Rounds::Constant { gain, step } => (*gain, *step),
            Rounds::Explicit(v) => v[t.saturating_sub(1).min(v.len() - 1)],
        };
        RoundParams::new(self.ell, gain, step)
    }
}

fn check_round(ell: f64, gain: f64, step: f64) -> Result<(f64, f64, bool)> {
    if !(ell >= 0.0) {
        return Err(Error::config(format!("weak convexity constant must be nonnegative, got {ell}")));
    }
    let floor = (2.0 * ell).max(GAIN_FLOOR);
    // relative slack so that c = 2ℓ survives a round trip through text
    if !(gain >= floor * (1.0 - 1e-12)) {
        return Err(Error::config(format!("gain {gain} is below 2ℓ = {}", 2.0 * ell)));
    }
    if !(step >= 0.0) {
        return Err(Error::config(format!("step must be nonnegative, got {step}")));
    }
    if gain * step >= 1.0 {
        Ok((gain, MAX_GAIN_STEP_PRODUCT / gain, true))
    } else {
        Ok((gain, step, false))
    }
}

/// What the coordinator carries from round `t − 1` into round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncentiveState {
    pub round: usize,
    /// `x*_{t−1}`
    pub x_prev: DVector<f64>,
    /// `Ĝ_{t−1}(x*_{t−1})`
    pub ghat_prev: DVector<f64>,
}

impl IncentiveState {
    /// `x⁺_t = x*_{t−1} + ξ_t Ĝ_{t−1}(x*_{t−1})`. The gradient step has a positive sign.
    pub fn target(&self, schedule: &IncentiveSchedule) -> DVector<f64> {
        let step = schedule.params(self.round).step;
        &self.x_prev + &self.ghat_prev * step
    }

    /// `Ḡ_t` as the affine pair `(Q + c_t I, q − c_t x⁺_t)`.
    pub fn extended_mapping(&self, game: &QuadraticGame, schedule: &IncentiveSchedule) -> Result<AffineMap> {
        if self.x_prev.len() != game.dim() || self.ghat_prev.len() != game.dim() {
            return Err(Error::dim("incentive state does not match the game dimension"));
        }
        let gain = schedule.params(self.round).gain;
        let target = self.target(schedule);
        let n = game.dim();
        let m = game.matrix() + DMatrix::identity(n, n) * gain;
        let r = game.linear() - target * gain;
        Ok(AffineMap::new(m, r))
    }
}

/// `F(x) = Mx + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Self {
        assert_eq!(matrix.nrows(), offset.len(), "affine map shape mismatch");
        assert_eq!(matrix.nrows(), matrix.ncols(), "affine map must be square");
        AffineMap { matrix, offset }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    /// Strong monotonicity modulus `λ_min((M + Mᵀ)/2)`.
    pub fn monotonicity_modulus(&self) -> Result<f64> {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        Ok(crate::linalg::symmetric_spectrum(&sym)?.0)
    }
}
