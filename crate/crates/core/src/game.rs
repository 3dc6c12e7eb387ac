//! Quadratic games with symmetric interactions.
//!
//! Agent `i` controls a block `x_i ∈ ℝ^{n_i}` and pays
//!
//! ```text
//! J_i(x) = ½ x_iᵀ Q_i x_i + (Σ_{j≠i} C_{i,j} x_j + q_i)ᵀ x_i
//! ```
//!
//! Stacking the partial gradients gives the affine pseudo-gradient `G(x) = Qx + q`,
//! where `Q` carries `Q_i` on its diagonal blocks and `C_{i,j}` off the diagonal.
//! When every cross block satisfies `C_{i,j} = C_{j,i}ᵀ` the matrix `Q` is symmetric,
//! `G` is the gradient of [`QuadraticGame::potential`], and the potential is
//! `ℓ`-weakly convex with `ℓ = |λ_min(Q)|`.
//!
//! Agents are indexed from zero throughout the crate.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Absolute tolerance of the symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    q_mat: DMatrix<f64>,
    q_vec: DVector<f64>,
}

/// One symmetry violation found by [`QuadraticGame::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SymmetryViolation {
    /// `Q_i` differs from its transpose.
    AgentBlock { agent: usize, max_deviation: f64 },
    /// `C_{i,j}` differs from `C_{j,i}ᵀ` (reported once per unordered pair, `i < j`).
    CrossPair { i: usize, j: usize, max_deviation: f64 },
}

impl SymmetryViolation {
    pub fn max_deviation(&self) -> f64 {
        match self {
            SymmetryViolation::AgentBlock { max_deviation, .. }
            | SymmetryViolation::CrossPair { max_deviation, .. } => *max_deviation,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<SymmetryViolation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no symmetry violations");
        }
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| match v {
                SymmetryViolation::AgentBlock { agent, max_deviation } => {
                    format!("Q_{agent} not symmetric (max deviation {max_deviation:.3e})")
                }
                SymmetryViolation::CrossPair { i, j, max_deviation } => {
                    format!("C_({i},{j}) != C_({j},{i})^T (max deviation {max_deviation:.3e})")
                }
            })
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// `ℓ = |λ_min(Q)|`, kept verbatim even when `λ_min > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakConvexityCertificate {
    pub ell: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl QuadraticGame {
    /// Builds a game from per-agent blocks.
    ///
    /// `cross` holds `C_{i,j}` keyed by `(i, j)` with `i ≠ j`; absent pairs are zero.
    /// Only shapes are checked here; symmetry is reported by [`validate`](Self::validate).
    pub fn from_blocks(
        dims: Vec<usize>,
        agent_blocks: Vec<DMatrix<f64>>,
        cross: BTreeMap<(usize, usize), DMatrix<f64>>,
        linear: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let offsets = offsets_of(&dims)?;
        let n = *offsets.last().unwrap();
        let num_agents = dims.len();
        if agent_blocks.len() != num_agents || linear.len() != num_agents {
            return Err(Error::dim(format!(
                "{num_agents} agents declared but {} curvature blocks and {} linear terms given",
                agent_blocks.len(),
                linear.len()
            )));
        }
        let mut q_mat = DMatrix::zeros(n, n);
        let mut q_vec = DVector::zeros(n);
        for (i, (block, lin)) in agent_blocks.iter().zip(&linear).enumerate() {
            let ni = dims[i];
            if block.shape() != (ni, ni) {
                return Err(Error::dim(format!(
                    "Q_{i} has shape {:?}, expected ({ni}, {ni})",
                    block.shape()
                )));
            }
            if lin.len() != ni {
                return Err(Error::dim(format!("q_{i} has length {}, expected {ni}", lin.len())));
            }
            q_mat.view_mut((offsets[i], offsets[i]), (ni, ni)).copy_from(block);
            q_vec.rows_mut(offsets[i], ni).copy_from(lin);
        }
        for (&(i, j), block) in &cross {
            if i >= num_agents || j >= num_agents || i == j {
                return Err(Error::dim(format!("invalid cross block index ({i}, {j})")));
            }
            if block.shape() != (dims[i], dims[j]) {
                return Err(Error::dim(format!(
                    "C_({i},{j}) has shape {:?}, expected ({}, {})",
                    block.shape(),
                    dims[i],
                    dims[j]
                )));
            }
            q_mat.view_mut((offsets[i], offsets[j]), (dims[i], dims[j])).copy_from(block);
        }
        Ok(QuadraticGame {
            dims,
            offsets,
            q_mat,
            q_vec,
        })
    }

    /// Builds a game from the assembled `Q` and `q`.
    pub fn from_dense(dims: Vec<usize>, q_mat: DMatrix<f64>, q_vec: DVector<f64>) -> Result<Self> {
        let offsets = offsets_of(&dims)?;
        let n = *offsets.last().unwrap();
        if q_mat.shape() != (n, n) || q_vec.len() != n {
            return Err(Error::dim(format!(
                "dims sum to {n} but Q is {:?} and q has length {}",
                q_mat.shape(),
                q_vec.len()
            )));
        }
        Ok(QuadraticGame {
            dims,
            offsets,
            q_mat,
            q_vec,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total decision dimension `n`.
    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    /// Start of agent `i`'s block in the stacked vector.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Assembled `Q`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    /// Stacked `q`.
    pub fn linear(&self) -> &DVector<f64> {
        &self.q_vec
    }

    pub fn agent_block(&self, i: usize) -> DMatrix<f64> {
        let (o, n) = (self.offsets[i], self.dims[i]);
        self.q_mat.view((o, o), (n, n)).into_owned()
    }

    pub fn cross_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.q_mat
            .view((self.offsets[i], self.offsets[j]), (self.dims[i], self.dims[j]))
            .into_owned()
    }

    pub fn agent_linear(&self, i: usize) -> DVector<f64> {
        self.q_vec.rows(self.offsets[i], self.dims[i]).into_owned()
    }

    /// Agent `i`'s slice of a stacked vector.
    pub fn slice<'a>(&self, x: &'a DVector<f64>, i: usize) -> DVectorView<'a, f64> {
        x.rows(self.offsets[i], self.dims[i])
    }

    /// Lists every violated symmetry requirement; empty iff the game is admissible.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n_agents = self.num_agents();
        for i in 0..n_agents {
            let b = self.agent_block(i);
            let dev = linalg::max_abs_diff(&b, &b.transpose());
            if dev > SYMMETRY_TOL {
                violations.push(SymmetryViolation::AgentBlock { agent: i, max_deviation: dev });
            }
        }
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                let cij = self.cross_block(i, j);
                let cji = self.cross_block(j, i);
                let dev = linalg::max_abs_diff(&cij, &cji.transpose());
                if dev > SYMMETRY_TOL {
                    violations.push(SymmetryViolation::CrossPair { i, j, max_deviation: dev });
                }
            }
        }
        ValidationReport { violations }
    }

    /// Fails with [`Error::Inadmissible`] unless [`validate`](Self::validate) is clean.
    pub fn ensure_admissible(&self) -> Result<()> {
        let report = self.validate();
        if report.is_admissible() {
            Ok(())
        } else {
            Err(Error::Inadmissible(report))
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "point has dimension {}, game has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Cost `J_i(x)` of agent `i`.
    pub fn agent_cost(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        if i >= self.num_agents() {
            return Err(Error::AgentIndex {
                index: i,
                num_agents: self.num_agents(),
            });
        }
        self.check_dim(x)?;
        let (o, ni) = (self.offsets[i], self.dims[i]);
        let xi = x.rows(o, ni);
        let qi = self.q_mat.view((o, o), (ni, ni));
        // (Qx)_i = Q_i x_i + Σ_{j≠i} C_{i,j} x_j
        let row_times_x = self.q_mat.rows(o, ni) * x;
        let own = qi * xi;
        let coupling = row_times_x - &own;
        Ok(0.5 * xi.dot(&own) + xi.dot(&(coupling + self.q_vec.rows(o, ni))))
    }

    /// All agents' costs at `x`.
    pub fn agent_costs(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        (0..self.num_agents()).map(|i| self.agent_cost(i, x)).collect()
    }

    /// `G(x) = Qx + q`.
    pub fn pseudo_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.q_mat * x + &self.q_vec)
    }

    /// The potential, built from the strictly lower-triangular cross terms.
    pub fn potential(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.potential_with(x, |j, i| j < i))
    }

    pub(crate) fn potential_with(&self, x: &DVector<f64>, keep: impl Fn(usize, usize) -> bool) -> f64 {
        let mut total = 0.0;
        for i in 0..self.num_agents() {
            let (oi, ni) = (self.offsets[i], self.dims[i]);
            let xi = x.rows(oi, ni);
            let qi = self.q_mat.view((oi, oi), (ni, ni));
            total += 0.5 * xi.dot(&(qi * xi)) + self.q_vec.rows(oi, ni).dot(&xi);
            for j in 0..self.num_agents() {
                if j == i || !keep(j, i) {
                    continue;
                }
                let (oj, nj) = (self.offsets[j], self.dims[j]);
                let cij = self.q_mat.view((oi, oj), (ni, nj));
                total += xi.dot(&(cij * x.rows(oj, nj)));
            }
        }
        total
    }

    /// `ℓ = |λ_min(Q)|` from a symmetric eigensolver.
    pub fn weak_convexity(&self) -> Result<WeakConvexityCertificate> {
        let (lambda_min, lambda_max) = linalg::symmetric_spectrum(&self.q_mat)?;
        Ok(WeakConvexityCertificate {
            ell: lambda_min.abs(),
            lambda_min,
            lambda_max,
        })
    }

    /// `‖Q‖₂` for a symmetric `Q`.
    pub fn spectral_norm(&self) -> Result<f64> {
        let (lo, hi) = linalg::symmetric_spectrum(&self.q_mat)?;
        Ok(lo.abs().max(hi.abs()))
    }

    /// Serializable form; only `C_{i,j}` with `i < j` is stored.
    pub fn to_document(&self) -> Result<GameDocument> {
        self.ensure_admissible()?;
        let n_agents = self.num_agents();
        let mut c_blocks = BTreeMap::new();
        for i in 0..n_agents {
            for j in (i + 1)..n_agents {
                let c = self.cross_block(i, j);
                if c.iter().any(|v| *v != 0.0) {
                    c_blocks.insert(format!("{i},{j}"), linalg::to_row_major(&c));
                }
            }
        }
        Ok(GameDocument {
            dims: self.dims.clone(),
            q_blocks: (0..n_agents).map(|i| linalg::to_row_major(&self.agent_block(i))).collect(),
            c_blocks,
            q: (0..n_agents).map(|i| self.agent_linear(i).iter().copied().collect()).collect(),
        })
    }

    pub fn from_document(doc: &GameDocument) -> Result<Self> {
        let n_agents = doc.dims.len();
        if doc.q_blocks.len() != n_agents || doc.q.len() != n_agents {
            return Err(Error::dim("Q_blocks and q must have one entry per agent"));
        }
        let mut blocks = Vec::with_capacity(n_agents);
        for (i, data) in doc.q_blocks.iter().enumerate() {
            let ni = doc.dims[i];
            if data.len() != ni * ni {
                return Err(Error::dim(format!("Q_blocks[{i}] has {} entries, expected {}", data.len(), ni * ni)));
            }
            blocks.push(DMatrix::from_row_slice(ni, ni, data));
        }
        let mut cross = BTreeMap::new();
        for (key, data) in &doc.c_blocks {
            let (i, j) = parse_pair(key)?;
            if i >= j || j >= n_agents {
                return Err(Error::Format(format!("C_blocks key \"{key}\" must satisfy i < j < N")));
            }
            let (ni, nj) = (doc.dims[i], doc.dims[j]);
            if data.len() != ni * nj {
                return Err(Error::dim(format!("C_blocks[\"{key}\"] has {} entries, expected {}", data.len(), ni * nj)));
            }
            let c = DMatrix::from_row_slice(ni, nj, data);
            cross.insert((j, i), c.transpose());
            cross.insert((i, j), c);
        }
        let linear = doc.q.iter().map(|v| DVector::from_column_slice(v)).collect();
        QuadraticGame::from_blocks(doc.dims.clone(), blocks, cross, linear)
    }
}

fn offsets_of(dims: &[usize]) -> Result<Vec<usize>> {
    if dims.is_empty() {
        return Err(Error::dim("a game needs at least one agent"));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::dim(format!("agent {i} has dimension 0")));
    }
    let mut offsets = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for d in dims {
        acc += d;
        offsets.push(acc);
    }
    Ok(offsets)
}

fn parse_pair(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::Format(format!("C_blocks key \"{key}\" is not of the form \"i,j\""));
    let (a, b) = key.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// JSON layout of a game. Blocks are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDocument {
    pub dims: Vec<usize>,
    #[serde(rename = "Q_blocks")]
    pub q_blocks: Vec<Vec<f64>>,
    /// Keyed `"i,j"` with `i < j`; `C_{j,i}` is the transpose.
    #[serde(rename = "C_blocks", default)]
    pub c_blocks: BTreeMap<String, Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}
