//! The feasible set `Ω = {x ∈ X : Ax ≤ b}` with `X` a product of boxes.
//!
//! Projections solve the strictly convex QP `min ½‖x − z‖²_W` over `Ω` through its
//! dual: for multipliers `λ ≥ 0` on the coupling rows the inner minimizer is the box
//! clip `x(λ) = clip(z − W⁻¹Aᵀλ)`, and the dual is maximized by accelerated projected
//! gradient ascent. Every few iterations a semismooth Newton step on the rows that
//! look active tries to finish the solve exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, NumericalFailure, Result};
use crate::linalg;

pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;
pub const MAX_PROJECTION_ITERS: usize = 100_000;
/// Largest residual accepted by [`FeasibleGeometry::check_nonempty`].
pub const NONEMPTY_TOL: f64 = 1e-9;

const POLISH_EVERY: usize = 25;
const POLISH_STEPS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleGeometry {
    lower: DVector<f64>,
    upper: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// `‖A‖₂²`, the Lipschitz constant of the unweighted dual gradient.
    a_norm_sq: f64,
}

/// Outcome of [`FeasibleGeometry::check_nonempty`].
#[derive(Debug, Clone, PartialEq)]
pub struct NonemptyCertificate {
    pub nonempty: bool,
    /// Best point found; feasible up to [`NONEMPTY_TOL`] when `nonempty` holds.
    pub witness: DVector<f64>,
    /// Smallest uniform relaxation `s` of `Ax ≤ b + s·1` reached at the witness.
    pub slack: f64,
}

impl FeasibleGeometry {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = lower.len();
        if upper.len() != n {
            return Err(Error::dim(format!("{n} lower bounds but {} upper bounds", upper.len())));
        }
        if a.ncols() != n || a.nrows() != b.len() {
            return Err(Error::dim(format!(
                "A is {:?}, expected ({}, {n})",
                a.shape(),
                b.len()
            )));
        }
        if let Some(k) = (0..n).find(|&k| !(lower[k] <= upper[k])) {
            return Err(Error::config(format!(
                "empty box at coordinate {k}: [{}, {}]",
                lower[k], upper[k]
            )));
        }
        let a_norm_sq = linalg::spectral_norm(&a, 1e-12, 10_000).powi(2);
        Ok(FeasibleGeometry {
            lower,
            upper,
            a,
            b,
            a_norm_sq,
        })
    }

    /// A pure box, no coupling rows.
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = lower.len();
        Self::new(lower, upper, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn resources(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn clip(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(z.len(), |k, _| z[k].clamp(self.lower[k], self.upper[k]))
    }

    /// Largest violation of any box bound or coupling row (zero when feasible).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let box_v = (0..x.len())
            .map(|k| (self.lower[k] - x[k]).max(x[k] - self.upper[k]))
            .fold(0.0, f64::max);
        let row_v = (&self.a * x - &self.b).iter().copied().fold(0.0, f64::max);
        box_v.max(row_v)
    }

    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.violation(x) <= tol
    }

    /// Euclidean projection onto `Ω`.
    pub fn project(&self, z: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        self.projector(None).project(z, tol)
    }

    /// Projection machinery for the norm `‖·‖_W`, `W = diag(weights)`.
    pub fn projector(&self, weights: Option<&DVector<f64>>) -> Projector<'_> {
        match weights {
            None => Projector {
                geom: self,
                inv_weights: None,
                step: if self.a_norm_sq > 0.0 { 1.0 / self.a_norm_sq } else { 1.0 },
            },
            Some(w) => {
                let inv = w.map(|v| 1.0 / v);
                let scaled = DMatrix::from_fn(self.a.nrows(), self.a.ncols(), |i, j| {
                    self.a[(i, j)] * inv[j].sqrt()
                });
                let l = linalg::spectral_norm(&scaled, 1e-12, 10_000).powi(2);
                Projector {
                    geom: self,
                    inv_weights: Some(inv),
                    step: if l > 0.0 { 1.0 / l } else { 1.0 },
                }
            }
        }
    }

    /// Looks for a point of `Ω` by minimizing the uniform relaxation `s` of the coupling
    /// rows over `X` with Polyak-step projected subgradient.
    pub fn check_nonempty(&self) -> NonemptyCertificate {
        let mut x = self.clip(&DVector::zeros(self.dim()));
        let slack_at = |x: &DVector<f64>| (&self.a * x - &self.b).iter().copied().fold(0.0, f64::max);
        // A row that cannot be met anywhere on the box settles the question at once.
        for k in 0..self.num_rows() {
            let row = self.a.row(k);
            let best: f64 = (0..self.dim())
                .map(|j| (row[j] * self.lower[j]).min(row[j] * self.upper[j]))
                .sum();
            if best > self.b[k] + NONEMPTY_TOL {
                let s = slack_at(&x);
                return NonemptyCertificate { nonempty: false, witness: x, slack: s };
            }
        }
        let mut best_x = x.clone();
        let mut best_s = slack_at(&x);
        for _ in 0..MAX_PROJECTION_ITERS {
            if best_s <= NONEMPTY_TOL {
                break;
            }
            let r = &self.a * &x - &self.b;
            let (k, s) = r.argmax();
            let row = self.a.row(k).transpose();
            let nrm = row.norm_squared();
            if nrm == 0.0 {
                break;
            }
            x = self.clip(&(&x - row * (s / nrm)));
            let s = slack_at(&x);
            if s < best_s {
                best_s = s;
                best_x = x.clone();
            }
        }
        NonemptyCertificate {
            nonempty: best_s <= NONEMPTY_TOL,
            witness: best_x,
            slack: best_s,
        }
    }
}

/// A projection onto `Ω` in a fixed diagonal norm, with its dual step size precomputed.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    geom: &'a FeasibleGeometry,
    inv_weights: Option<DVector<f64>>,
    step: f64,
}

impl Projector<'_> {
    fn primal(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        let mut d = self.geom.a.tr_mul(lambda);
        if let Some(inv) = &self.inv_weights {
            d.component_mul_assign(inv);
        }
        self.geom.clip(&(z - d))
    }

    /// Dual natural residual `‖λ − max(0, λ + (Ax(λ) − b))‖_∞`, evaluated as
    /// `‖min(λ, b − Ax(λ))‖_∞` so that a huge multiplier cannot absorb the slack in
    /// rounding. Bounds both the row violation and the complementarity gap.
    fn kkt_residual(&self, lambda: &DVector<f64>, slack: &DVector<f64>) -> f64 {
        lambda
            .iter()
            .zip(slack.iter())
            .map(|(l, s)| l.min(-s).abs())
            .fold(0.0, f64::max)
    }

    /// Projects `z`. The KKT tolerance is relative: `tol · max(1, ‖z‖_∞)`.
    pub fn project(&self, z: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        let geom = self.geom;
        if z.len() != geom.dim() {
            return Err(Error::dim(format!("point has dimension {}, set has {}", z.len(), geom.dim())));
        }
        let tol = tol * z.amax().max(1.0);
        let x0 = geom.clip(z);
        if geom.num_rows() == 0 || (&geom.a * &x0 - &geom.b).iter().all(|s| *s <= 0.0) {
            return Ok(x0);
        }
        let m = geom.num_rows();
        let mut lambda = DVector::zeros(m);
        let mut y = lambda.clone();
        let mut t = 1.0f64;
        let mut residual = f64::INFINITY;
        for k in 0..MAX_PROJECTION_ITERS {
            if k % POLISH_EVERY == 0 {
                if let Some(x) = self.polish(z, &lambda, tol) {
                    return Ok(x);
                }
            }
            let xy = self.primal(z, &y);
            let grad = &geom.a * &xy - &geom.b;
            let next = (&y + grad * self.step).map(|v| v.max(0.0));
            // gradient-based adaptive restart
            let restart = (&y - &next).dot(&(&next - &lambda)) > 0.0;
            let t_next = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            y = if restart {
                next.clone()
            } else {
                &next + (&next - &lambda) * ((t - 1.0) / t_next)
            };
            t = t_next;
            lambda = next;

            let x = self.primal(z, &lambda);
            let slack = &geom.a * &x - &geom.b;
            residual = self.kkt_residual(&lambda, &slack);
            if residual <= tol {
                return Ok(x);
            }
        }
        Err(NumericalFailure::new("dual projected gradient", MAX_PROJECTION_ITERS, residual)
            .with_iterate(self.primal(z, &lambda))
            .into())
    }

    /// Semismooth Newton on `A_S x(λ) = b_S` over the rows that look active.
    fn polish(&self, z: &DVector<f64>, start: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
        let geom = self.geom;
        let n = geom.dim();
        let mut lambda = start.clone();
        for _ in 0..POLISH_STEPS {
            let x = self.primal(z, &lambda);
            let slack = &geom.a * &x - &geom.b;
            if self.kkt_residual(&lambda, &slack) <= tol {
                return Some(x);
            }
            let active: Vec<usize> = (0..geom.num_rows())
                .filter(|&k| lambda[k] > 0.0 || slack[k] > 0.0)
                .collect();
            if active.is_empty() {
                return None;
            }
            let mut unclipped = geom.a.tr_mul(&lambda);
            if let Some(inv) = &self.inv_weights {
                unclipped.component_mul_assign(inv);
            }
            let free: Vec<usize> = (0..n)
                .filter(|&j| {
                    let v = z[j] - unclipped[j];
                    v > geom.lower[j] && v < geom.upper[j]
                })
                .collect();
            // a row without free coordinates cannot be moved by its multiplier
            let active: Vec<usize> = active
                .into_iter()
                .filter(|&k| free.iter().any(|&j| geom.a[(k, j)] != 0.0))
                .collect();
            if active.is_empty() {
                return None;
            }
            let s = active.len();
            let mut h = DMatrix::zeros(s, s);
            for (p, &kp) in active.iter().enumerate() {
                for (q, &kq) in active.iter().enumerate() {
                    h[(p, q)] = free
                        .iter()
                        .map(|&j| {
                            let w = self.inv_weights.as_ref().map_or(1.0, |inv| inv[j]);
                            geom.a[(kp, j)] * geom.a[(kq, j)] * w
                        })
                        .sum::<f64>();
                }
                h[(p, p)] += 1e-14;
            }
            let rhs = DVector::from_fn(s, |p, _| slack[active[p]]);
            let d = h.lu().solve(&rhs)?;
            if !d.iter().all(|v| v.is_finite()) {
                return None;
            }
            for (p, &k) in active.iter().enumerate() {
                lambda[k] = (lambda[k] + d[p]).max(0.0);
            }
        }
        None
    }
}
