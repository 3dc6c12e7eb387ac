use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameDocument, QuadraticGame};
use crate::geometry::FeasibleGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// `x_i + x_{i+1} ≤ b_i` for consecutive agents.
    #[default]
    Chain,
    /// The chain plus `x_N + x_1 ≤ b_N`.
    Ring,
}

/// Recipe for a random instance.
///
/// `Q_i = (D + Dᵀ)/2` and `C_{i,j}` (`i < j`) have standard normal entries, with
/// `C_{j,i} = C_{i,j}ᵀ`; `q` is uniform on `(−1, 1)` and `b` uniform on `(0, 1)`.
/// An agent with several coordinates enters a coupling row through their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceSpec {
    pub num_agents: usize,
    /// Per-agent dimensions; empty means every agent is scalar.
    pub dims: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
    pub coupling: Coupling,
    pub seed: u64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            num_agents: 20,
            dims: Vec::new(),
            lower: 0.0,
            upper: 1.0,
            coupling: Coupling::Chain,
            seed: 0,
        }
    }
}

impl InstanceSpec {
    pub fn new(num_agents: usize, seed: u64) -> Self {
        InstanceSpec { num_agents, seed, ..Default::default() }
    }

    fn agent_dims(&self) -> Result<Vec<usize>> {
        if self.num_agents == 0 {
            return Err(Error::config("an instance needs at least one agent"));
        }
        if self.dims.is_empty() {
            return Ok(vec![1; self.num_agents]);
        }
        if self.dims.len() != self.num_agents || self.dims.contains(&0) {
            return Err(Error::config("dims must list a positive dimension for every agent"));
        }
        Ok(self.dims.clone())
    }
}

/// Draws a game and its feasible set; deterministic in `spec.seed`.
pub fn generate_instance(spec: &InstanceSpec) -> Result<(QuadraticGame, FeasibleGeometry)> {
    let dims = spec.agent_dims()?;
    if !(spec.lower <= 0.0 && 0.0 <= spec.upper) {
        return Err(Error::config("box bounds must contain 0"));
    }
    let n_agents = dims.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));

    let blocks: Vec<DMatrix<f64>> = dims
        .iter()
        .map(|&d| {
            let m = normal(d, d);
            (&m + m.transpose()) * 0.5
        })
        .collect();
    let mut cross = BTreeMap::new();
    for i in 0..n_agents {
        for j in i + 1..n_agents {
            let c = normal(dims[i], dims[j]);
            cross.insert((j, i), c.transpose());
            cross.insert((i, j), c);
        }
    }
    let linear = dims
        .iter()
        .map(|&d| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let game = QuadraticGame::from_blocks(dims.clone(), blocks, cross, linear)?;
    game.ensure_admissible()?;

    let mut pairs: Vec<(usize, usize)> = (0..n_agents.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if spec.coupling == Coupling::Ring && n_agents > 2 {
        pairs.push((n_agents - 1, 0));
    }
    let n = game.dim();
    let mut a = DMatrix::zeros(pairs.len(), n);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        for agent in [i, j] {
            let o = game.offset(agent);
            for k in 0..dims[agent] {
                a[(row, o + k)] = 1.0;
            }
        }
    }
    // (0, 1) excludes 0, so the origin stays strictly inside every row
    let b = DVector::from_fn(pairs.len(), |_, _| loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            break v;
        }
    });
    let geom = FeasibleGeometry::new(
        DVector::from_element(n, spec.lower),
        DVector::from_element(n, spec.upper),
        a,
        b,
    )?;
    Ok((game, geom))
}

/// JSON layout of a game together with its feasible set. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    #[serde(flatten)]
    pub game: GameDocument,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl InstanceDocument {
    pub fn new(game: &QuadraticGame, geom: &FeasibleGeometry) -> Result<Self> {
        let a = geom.coupling();
        Ok(InstanceDocument {
            game: game.to_document()?,
            lower: geom.lower().iter().copied().collect(),
            upper: geom.upper().iter().copied().collect(),
            a: (0..a.nrows()).map(|r| a.row(r).iter().copied().collect()).collect(),
            b: geom.resources().iter().copied().collect(),
        })
    }

    pub fn build(&self) -> Result<(QuadraticGame, FeasibleGeometry)> {
        let game = QuadraticGame::from_document(&self.game)?;
        let n = game.dim();
        if self.a.iter().any(|r| r.len() != n) {
            return Err(Error::dim(format!("every row of A needs {n} entries")));
        }
        let a = DMatrix::from_fn(self.a.len(), n, |r, c| self.a[r][c]);
        let geom = FeasibleGeometry::new(
            DVector::from_vec(self.lower.clone()),
            DVector::from_vec(self.upper.clone()),
            a,
            DVector::from_vec(self.b.clone()),
        )?;
        Ok((game, geom))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_shape() {
        let (game, geom) = generate_instance(&InstanceSpec::new(20, 3)).unwrap();
        assert_eq!(game.dim(), 20);
        assert_eq!(geom.num_rows(), 19);
        assert!(game.validate().is_admissible());
        assert!(game.weak_convexity().unwrap().ell > 0.0);
        assert!(geom.check_nonempty().nonempty);
        assert!(geom.is_feasible(&DVector::zeros(20), 0.0));
    }

    #[test]
    fn two_agents_have_one_row() {
        let (_, geom) = generate_instance(&InstanceSpec::new(2, 0)).unwrap();
        assert_eq!(geom.num_rows(), 1);
        assert_eq!(geom.coupling().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
        assert!(geom.resources()[0] > 0.0 && geom.resources()[0] < 1.0);
    }

    #[test]
    fn ring_adds_the_wraparound_row() {
        let spec = InstanceSpec { coupling: Coupling::Ring, ..InstanceSpec::new(5, 1) };
        let (_, geom) = generate_instance(&spec).unwrap();
        assert_eq!(geom.num_rows(), 5);
        assert_eq!(geom.coupling()[(4, 4)], 1.0);
        assert_eq!(geom.coupling()[(4, 0)], 1.0);
    }

    #[test]
    fn vector_agents_couple_through_sums() {
        let spec = InstanceSpec { dims: vec![2, 1, 3], ..InstanceSpec::new(3, 5) };
        let (game, geom) = generate_instance(&spec).unwrap();
        assert_eq!(game.dim(), 6);
        assert_eq!(geom.coupling().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(game.validate().is_admissible());
    }

    #[test]
    fn same_seed_same_document() {
        let doc = |seed| {
            let (g, o) = generate_instance(&InstanceSpec::new(6, seed)).unwrap();
            InstanceDocument::new(&g, &o).unwrap().to_json().unwrap()
        };
        assert_eq!(doc(9), doc(9));
        assert_ne!(doc(9), doc(10));
    }

    #[test]
    fn document_round_trip() {
        let (g, o) = generate_instance(&InstanceSpec::new(4, 2)).unwrap();
        let doc = InstanceDocument::new(&g, &o).unwrap();
        let back = InstanceDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        let (g2, o2) = back.build().unwrap();
        assert_eq!(g2.matrix(), g.matrix());
        assert_eq!(o2, o);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_instance(&InstanceSpec::new(0, 0)).is_err());
        let spec = InstanceSpec { dims: vec![1, 2], ..InstanceSpec::new(3, 0) };
        assert!(generate_instance(&spec).is_err());
    }
}
