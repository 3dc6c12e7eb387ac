use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{EstimatorKind, FeedbackSample, GradientEstimator};
use crate::error::{Error, Result};
use crate::game::QuadraticGame;

/// Ridge regression of every agent's cost on the monomials of a quadratic game.
///
/// Agent `i`'s feature row at `x` is laid out as
/// `(½x_{i,a}² or x_{i,a}x_{i,b} for a ≤ b, x_{j,b}·x_{i,a} for j ≠ i, x_{i,a})`,
/// so the fitted parameters read off directly as `Q_i`, `C_ij` and `q_i`.
#[derive(Debug, Clone)]
pub struct LeastSquaresEstimator {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    ridge: f64,
    window: Option<usize>,
    samples: VecDeque<FeedbackSample>,
    // per agent: Σ φφᵀ and Σ φp
    gram: Vec<DMatrix<f64>>,
    moment: Vec<DVector<f64>>,
}

impl LeastSquaresEstimator {
    pub fn new(dims: Vec<usize>, ridge: f64, window: Option<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::dim("every agent needs at least one coordinate"));
        }
        if !(ridge > 0.0) {
            return Err(Error::config(format!("ridge weight must be positive, got {ridge}")));
        }
        let n: usize = dims.iter().sum();
        let offsets = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let feat = |d: usize| d * (d + 1) / 2 + d * (n - d) + d;
        let gram = dims.iter().map(|&d| DMatrix::zeros(feat(d), feat(d))).collect();
        let moment = dims.iter().map(|&d| DVector::zeros(feat(d))).collect();
        Ok(LeastSquaresEstimator {
            dims,
            offsets,
            ridge,
            window,
            samples: VecDeque::new(),
            gram,
            moment,
        })
    }

    fn dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Feature row of agent `i` at `x`.
    pub fn features(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        if i >= self.dims.len() {
            return Err(Error::AgentIndex { index: i, num_agents: self.dims.len() });
        }
        if x.len() != self.dim() {
            return Err(Error::dim(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        let (o, d) = (self.offsets[i], self.dims[i]);
        let mut phi = Vec::with_capacity(self.moment[i].len());
        for a in 0..d {
            phi.push(0.5 * x[o + a] * x[o + a]);
            for b in a + 1..d {
                phi.push(x[o + a] * x[o + b]);
            }
        }
        for j in (0..self.dims.len()).filter(|&j| j != i) {
            let (oj, dj) = (self.offsets[j], self.dims[j]);
            for a in 0..d {
                for b in 0..dj {
                    phi.push(x[o + a] * x[oj + b]);
                }
            }
        }
        phi.extend((0..d).map(|a| x[o + a]));
        Ok(DVector::from_vec(phi))
    }

    fn accumulate(&mut self, sample: &FeedbackSample, sign: f64) -> Result<()> {
        for i in 0..self.dims.len() {
            let phi = self.features(i, &sample.x)?;
            self.gram[i].ger(sign, &phi, &phi, 1.0);
            self.moment[i].axpy(sign * sample.costs[i], &phi, 1.0);
        }
        Ok(())
    }

    fn rebuild(&mut self) -> Result<()> {
        self.gram.iter_mut().for_each(|g| g.fill(0.0));
        self.moment.iter_mut().for_each(|m| m.fill(0.0));
        let samples = std::mem::take(&mut self.samples);
        for s in &samples {
            self.accumulate(s, 1.0)?;
        }
        self.samples = samples;
        Ok(())
    }

    /// Ridge solution `η̂_i` for each agent.
    ///
    /// The penalty acts on features scaled to unit energy, `(D⁻¹GD⁻¹ + ρI) y = D⁻¹h`
    /// with `D = diag(G)^½` and `η = D⁻¹y`, so that coordinates confined to a narrow
    /// range are not swamped by the ridge term.
    pub fn parameters(&self) -> Result<Vec<DVector<f64>>> {
        self.gram
            .iter()
            .zip(&self.moment)
            .map(|(g, m)| {
                let d = g.diagonal().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
                let mut a = DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| g[(r, c)] / (d[r] * d[c]));
                for k in 0..a.nrows() {
                    a[(k, k)] += self.ridge;
                }
                let chol = a.cholesky().ok_or_else(|| {
                    Error::Numerical(crate::error::NumericalFailure::new("ridge normal equations", 0, f64::NAN))
                })?;
                Ok(chol.solve(&m.component_div(&d)).component_div(&d))
            })
            .collect()
    }

    /// The game implied by the current fit, with cross blocks symmetrized.
    pub fn estimated_game(&self) -> Result<QuadraticGame> {
        let n = self.dim();
        let params = self.parameters()?;
        let mut q_mat = DMatrix::zeros(n, n);
        let mut q_vec = DVector::zeros(n);
        for (i, eta) in params.iter().enumerate() {
            let (o, d) = (self.offsets[i], self.dims[i]);
            let mut k = 0;
            for a in 0..d {
                q_mat[(o + a, o + a)] = eta[k];
                k += 1;
                for b in a + 1..d {
                    q_mat[(o + a, o + b)] = eta[k];
                    q_mat[(o + b, o + a)] = eta[k];
                    k += 1;
                }
            }
            for j in (0..self.dims.len()).filter(|&j| j != i) {
                let (oj, dj) = (self.offsets[j], self.dims[j]);
                for a in 0..d {
                    for b in 0..dj {
                        q_mat[(o + a, oj + b)] = eta[k];
                        k += 1;
                    }
                }
            }
            for a in 0..d {
                q_vec[o + a] = eta[k];
                k += 1;
            }
        }
        // Ĉ_ij ← (Ĉ_ij + Ĉ_jiᵀ)/2; diagonal blocks are already symmetric.
        let sym = (&q_mat + q_mat.transpose()) * 0.5;
        QuadraticGame::from_dense(self.dims.clone(), sym, q_vec)
    }
}

impl GradientEstimator for LeastSquaresEstimator {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::LeastSquares
    }

    fn observe(&mut self, sample: &FeedbackSample) -> Result<()> {
        if sample.costs.len() != self.dims.len() {
            return Err(Error::dim(format!(
                "sample carries {} costs for {} agents",
                sample.costs.len(),
                self.dims.len()
            )));
        }
        self.accumulate(sample, 1.0)?;
        self.samples.push_back(sample.clone());
        if let Some(w) = self.window {
            if self.samples.len() > w {
                self.samples.pop_front();
                // refit from scratch rather than downdating, to keep the sums exact
                self.rebuild()?;
            }
        }
        Ok(())
    }

    fn estimate_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        if self.samples.is_empty() {
            return Ok(DVector::zeros(x.len()));
        }
        self.estimated_game()?.pseudo_gradient(x)
    }

    fn history_len(&self) -> usize {
        self.samples.len()
    }
}
