use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{EstimatorKind, FeedbackSample, GradientEstimator};
use crate::error::{Error, NumericalFailure, Result};

const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Gaussian-process regression of each agent's cost over the joint action.
///
/// All agents are observed at the same points, so a single kernel matrix and one
/// Cholesky factor serve every agent. The factor grows by one row per sample; a
/// failed append refactors with the next jitter level.
#[derive(Debug, Clone)]
pub struct GaussianProcessEstimator {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    length_scale: f64,
    signal_scale: f64,
    noise_variance: f64,
    window: Option<usize>,
    inputs: VecDeque<DVector<f64>>,
    targets: VecDeque<Vec<f64>>,
    chol: DMatrix<f64>,
    jitter_level: usize,
}

impl GaussianProcessEstimator {
    pub fn new(
        dims: Vec<usize>,
        length_scale: f64,
        signal_scale: f64,
        noise_variance: f64,
        window: Option<usize>,
    ) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::dim("every agent needs at least one coordinate"));
        }
        if !(length_scale > 0.0) || !(signal_scale > 0.0) || !(noise_variance >= 0.0) {
            return Err(Error::config(format!(
                "invalid kernel: length scale {length_scale}, signal scale {signal_scale}, noise {noise_variance}"
            )));
        }
        let offsets = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        Ok(GaussianProcessEstimator {
            dims,
            offsets,
            length_scale,
            signal_scale,
            noise_variance,
            window,
            inputs: VecDeque::new(),
            targets: VecDeque::new(),
            chol: DMatrix::zeros(0, 0),
            jitter_level: 0,
        })
    }

    fn dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn kernel(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d2 = (x - y).norm_squared();
        self.signal_scale.powi(2) * (-d2 / (2.0 * self.length_scale.powi(2))).exp()
    }

    /// Jitter currently added to the kernel diagonal.
    pub fn jitter(&self) -> f64 {
        JITTER_LADDER[self.jitter_level]
    }

    fn diag(&self) -> f64 {
        self.signal_scale.powi(2) + self.noise_variance + self.jitter()
    }

    fn refactor(&mut self) -> Result<()> {
        let s = self.inputs.len();
        loop {
            let mut k = DMatrix::from_fn(s, s, |a, b| self.kernel(&self.inputs[a], &self.inputs[b]));
            let d = self.diag();
            for a in 0..s {
                k[(a, a)] = d;
            }
            if let Some(c) = k.cholesky() {
                self.chol = c.unpack();
                return Ok(());
            }
            if self.jitter_level + 1 == JITTER_LADDER.len() {
                return Err(NumericalFailure::new("gaussian process cholesky", s, self.jitter()).into());
            }
            self.jitter_level += 1;
        }
    }

    fn append(&mut self, x: &DVector<f64>) -> Result<()> {
        let s = self.inputs.len() - 1;
        let kx = DVector::from_fn(s, |a, _| self.kernel(&self.inputs[a], x));
        let l = if s == 0 {
            DVector::zeros(0)
        } else {
            self.chol
                .solve_lower_triangular(&kx)
                .ok_or_else(|| NumericalFailure::new("gaussian process cholesky", s, f64::NAN))?
        };
        let pivot = self.diag() - l.norm_squared();
        if !(pivot > 0.0) || pivot < 1e-14 * self.diag() {
            return self.refactor();
        }
        let mut grown = DMatrix::zeros(s + 1, s + 1);
        grown.view_mut((0, 0), (s, s)).copy_from(&self.chol);
        grown.view_mut((s, 0), (1, s)).copy_from(&l.transpose());
        grown[(s, s)] = pivot.sqrt();
        self.chol = grown;
        Ok(())
    }

    fn weights(&self, agent: usize) -> DVector<f64> {
        let y = DVector::from_iterator(self.targets.len(), self.targets.iter().map(|p| p[agent]));
        let z = self.chol.solve_lower_triangular(&y).expect("factor has a positive diagonal");
        self.chol.tr_solve_lower_triangular(&z).expect("factor has a positive diagonal")
    }

    /// Posterior mean of agent `i`'s cost at `x`.
    pub fn posterior_mean(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        if i >= self.dims.len() {
            return Err(Error::AgentIndex { index: i, num_agents: self.dims.len() });
        }
        if x.len() != self.dim() {
            return Err(Error::dim(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        if self.inputs.is_empty() {
            return Ok(0.0);
        }
        let w = self.weights(i);
        Ok(self.inputs.iter().zip(w.iter()).map(|(xs, wk)| wk * self.kernel(x, xs)).sum())
    }
}

impl GradientEstimator for GaussianProcessEstimator {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::GaussianProcess
    }

    fn observe(&mut self, sample: &FeedbackSample) -> Result<()> {
        if sample.costs.len() != self.dims.len() || sample.x.len() != self.dim() {
            return Err(Error::dim("sample does not match the agent layout"));
        }
        self.inputs.push_back(sample.x.clone());
        self.targets.push_back(sample.costs.clone());
        match self.window {
            Some(w) if self.inputs.len() > w => {
                self.inputs.pop_front();
                self.targets.pop_front();
                self.refactor()
            }
            _ => self.append(&sample.x),
        }
    }

    fn estimate_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        let mut g = DVector::zeros(x.len());
        if self.inputs.is_empty() {
            return Ok(g);
        }
        let inv_l2 = 1.0 / self.length_scale.powi(2);
        let kx: Vec<f64> = self.inputs.iter().map(|xs| self.kernel(x, xs)).collect();
        for i in 0..self.dims.len() {
            let w = self.weights(i);
            let (o, d) = (self.offsets[i], self.dims[i]);
            for (s, xs) in self.inputs.iter().enumerate() {
                let scale = w[s] * kx[s] * inv_l2;
                for a in 0..d {
                    g[o + a] += scale * (xs[o + a] - x[o + a]);
                }
            }
        }
        Ok(g)
    }

    fn history_len(&self) -> usize {
        self.inputs.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{feedback, NoiseModel};
    use crate::game::tests::game_a;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn sample(x: &[f64], costs: &[f64]) -> FeedbackSample {
        FeedbackSample { round: 0, x: v(x), costs: costs.to_vec() }
    }

    #[test]
    fn empty_history_estimates_zero() {
        let gp = GaussianProcessEstimator::new(vec![1, 1], 50.0, 100.0, 0.0, None).unwrap();
        assert_eq!(gp.estimate_gradient(&v(&[0.1, 0.2])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn interpolates_noiseless_costs() {
        let g = game_a();
        let mut gp = GaussianProcessEstimator::new(vec![1, 1], 1.0, 1.0, 1e-10, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = Vec::new();
        for t in 0..8 {
            let x = v(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
            let s = feedback(&g, &x, t, &NoiseModel::exact(), &mut rng).unwrap();
            gp.observe(&s).unwrap();
            seen.push(s);
        }
        for s in &seen {
            for i in 0..2 {
                let m = gp.posterior_mean(i, &s.x).unwrap();
                assert!((m - s.costs[i]).abs() < 1e-6, "mean {m} vs {}", s.costs[i]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_the_mean() {
        let mut gp = GaussianProcessEstimator::new(vec![2, 1], 0.7, 2.0, 1e-4, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            gp.observe(&FeedbackSample { round: 0, x, costs: vec![rng.random(), rng.random()] }).unwrap();
        }
        let x = v(&[0.1, -0.3, 0.4]);
        let g = gp.estimate_gradient(&x).unwrap();
        let h = 1e-6;
        let owner = [0, 0, 1];
        for k in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (gp.posterior_mean(owner[k], &xp).unwrap() - gp.posterior_mean(owner[k], &xm).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "coordinate {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn repeated_points_escalate_jitter() {
        let mut gp = GaussianProcessEstimator::new(vec![1], 50.0, 100.0, 0.0, None).unwrap();
        for _ in 0..3 {
            gp.observe(&sample(&[0.5], &[1.0])).unwrap();
        }
        assert!(gp.jitter() > 0.0);
        assert!(gp.estimate_gradient(&v(&[0.2])).unwrap()[0].is_finite());
    }

    #[test]
    fn incremental_factor_matches_full() {
        let mut gp = GaussianProcessEstimator::new(vec![1, 1], 1.0, 1.0, 0.01, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..12 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            gp.observe(&FeedbackSample { round: 0, x, costs: vec![0.0, 0.0] }).unwrap();
        }
        let grown = gp.chol.clone();
        gp.refactor().unwrap();
        assert!((grown - &gp.chol).abs().max() < 1e-10);
    }

    #[test]
    fn window_drops_old_samples() {
        let mut gp = GaussianProcessEstimator::new(vec![1], 1.0, 1.0, 0.01, Some(3)).unwrap();
        for k in 0..6 {
            gp.observe(&sample(&[k as f64 * 0.3], &[k as f64])).unwrap();
        }
        assert_eq!(gp.history_len(), 3);
        assert_eq!(gp.chol.nrows(), 3);
    }
}
