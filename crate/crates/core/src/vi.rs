//! Solving the strongly monotone affine variational inequality of each outer round.
//!
//! Find `x* ∈ Ω` with `(y − x*)ᵀ F(x*) ≥ 0` for all `y ∈ Ω`, `F(x) = Mx + r`.
//! [`solve_vgne`] runs the extragradient method; [`affine_vi_oracle`] enumerates
//! active sets and exists only to check it on small instances.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, NumericalFailure, Result};
use crate::geometry::FeasibleGeometry;
use crate::incentive::AffineMap;
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Extragradient step `τ`; `None` picks `0.9 / L` with `L` the Lipschitz constant.
    pub step: Option<f64>,
    /// Diagonal of the weight `P` (`None` means identity).
    pub weights: Option<DVector<f64>>,
    /// Stop once the natural residual is at most this.
    pub tol: f64,
    pub max_iters: usize,
    pub projection_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            step: None,
            weights: None,
            tol: 1e-9,
            max_iters: 200_000,
            projection_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VgneSolution {
    pub x_star: DVector<f64>,
    /// Natural residual at `x_star` for the step actually used.
    pub residual: f64,
    pub iters: usize,
    pub step: f64,
}

/// `‖x − Π_Ω(x − τF(x))‖`.
pub fn natural_residual(
    map: &AffineMap,
    geom: &FeasibleGeometry,
    x: &DVector<f64>,
    tau: f64,
    projection_tol: f64,
) -> Result<f64> {
    let p = geom.project(&(x - map.evaluate(x) * tau), projection_tol)?;
    Ok((x - p).norm())
}

/// Lipschitz constant of `F` in the `P`-norm, by power iteration.
pub fn lipschitz_constant(map: &AffineMap, weights: Option<&DVector<f64>>) -> f64 {
    match weights {
        None => linalg::spectral_norm(&map.matrix, 1e-10, 100_000),
        Some(w) => {
            let s = w.map(|v| 1.0 / v.sqrt());
            let scaled = DMatrix::from_fn(map.dim(), map.dim(), |i, j| s[i] * map.matrix[(i, j)] * s[j]);
            linalg::spectral_norm(&scaled, 1e-10, 100_000)
        }
    }
}

/// Extragradient iteration
///
/// ```text
/// y_k     = Π(x_k − τ P⁻¹ F(x_k))
/// x_{k+1} = Π(x_k − τ P⁻¹ F(y_k))
/// ```
///
/// where `Π` projects in the `P`-norm. Starts from `x0` (projected first when it is
/// infeasible) and stops at the first iterate whose natural residual is within `tol`.
pub fn solve_vgne(
    map: &AffineMap,
    geom: &FeasibleGeometry,
    params: &SolverParams,
    x0: &DVector<f64>,
) -> Result<VgneSolution> {
    if map.dim() != geom.dim() || x0.len() != geom.dim() {
        return Err(Error::dim("map, feasible set and start point disagree in dimension"));
    }
    let weights = params.weights.as_ref();
    if let Some(w) = weights {
        if w.len() != map.dim() || w.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("weights must be positive, one per coordinate"));
        }
    }
    let tau = match params.step {
        Some(t) => t,
        None => {
            let l = lipschitz_constant(map, weights);
            if l > 0.0 { 0.9 / l } else { 1.0 }
        }
    };
    let inv_w = weights.map(|w| w.map(|v| 1.0 / v));
    let scaled = |f: DVector<f64>| match &inv_w {
        Some(inv) => f.component_mul(inv) * tau,
        None => f * tau,
    };
    let ptol = params.projection_tol;
    let projector = geom.projector(weights);

    let mut x = if geom.is_feasible(x0, ptol) {
        x0.clone()
    } else {
        projector.project(x0, ptol)?
    };
    let mut residual = f64::INFINITY;
    for k in 0..params.max_iters {
        let fx = map.evaluate(&x);
        let y = projector.project(&(&x - scaled(fx.clone())), ptol)?;
        residual = if inv_w.is_none() {
            (&x - &y).norm()
        } else {
            (&x - geom.project(&(&x - &fx * tau), ptol)?).norm()
        };
        if residual <= params.tol {
            return Ok(VgneSolution { x_star: x, residual, iters: k, step: tau });
        }
        x = projector.project(&(&x - scaled(map.evaluate(&y))), ptol)?;
    }
    Err(NumericalFailure::new("extragradient", params.max_iters, residual)
        .with_iterate(x)
        .into())
}

/// Largest dimension accepted by [`affine_vi_oracle`].
pub const ORACLE_MAX_DIM: usize = 10;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Face {
    Free,
    Lower,
    Upper,
}

/// Solves the affine VI by enumerating active sets.
///
/// For every assignment of each coordinate to {free, at lower bound, at upper bound}
/// and every subset of coupling rows held with equality, the KKT equality system is
/// solved; the first candidate that is primal feasible with correctly signed
/// multipliers is returned. Exponential in the dimension, so capped at
/// [`ORACLE_MAX_DIM`].
pub fn affine_vi_oracle(map: &AffineMap, geom: &FeasibleGeometry) -> Result<DVector<f64>> {
    let n = map.dim();
    if geom.dim() != n {
        return Err(Error::dim("map and feasible set disagree in dimension"));
    }
    if n > ORACLE_MAX_DIM {
        return Err(Error::config(format!(
            "active-set oracle is limited to n <= {ORACLE_MAX_DIM}, got {n}"
        )));
    }
    let m = geom.num_rows();
    let (lo, up, a, b) = (geom.lower(), geom.upper(), geom.coupling(), geom.resources());
    let scale = 1.0 + map.matrix.amax() + map.offset.amax() + a.amax() + b.amax();
    let tol = 1e-9 * scale;

    let mut faces = vec![Face::Free; n];
    let total_faces = 3usize.pow(n as u32);
    // fewest active constraints first, so the interior solution is tried early
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for code in 0..total_faces {
        for rows in 0..(1usize << m) {
            let fixed = {
                let mut c = code;
                let mut k = 0;
                for _ in 0..n {
                    if c % 3 != 0 {
                        k += 1;
                    }
                    c /= 3;
                }
                k
            };
            let active_rows = rows.count_ones() as usize;
            if active_rows <= n - fixed {
                candidates.push((fixed + active_rows, code * (1 << m) + rows));
            }
        }
    }
    candidates.sort();

    for &(_, key) in &candidates {
        let (code, rows) = (key >> m, key & ((1 << m) - 1));
        let mut c = code;
        for f in faces.iter_mut() {
            *f = match c % 3 {
                0 => Face::Free,
                1 => Face::Lower,
                _ => Face::Upper,
            };
            c /= 3;
        }
        if faces.iter().enumerate().any(|(k, f)| *f == Face::Upper && lo[k] == up[k]) {
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&k| faces[k] == Face::Free).collect();
        let active: Vec<usize> = (0..m).filter(|&r| rows & (1 << r) != 0).collect();
        let mut x = DVector::from_fn(n, |k, _| match faces[k] {
            Face::Lower => lo[k],
            Face::Upper => up[k],
            Face::Free => 0.0,
        });
        let (f, s) = (free.len(), active.len());
        let mut lambda = DVector::zeros(m);
        if f + s > 0 {
            let mut kkt = DMatrix::zeros(f + s, f + s);
            let mut rhs = DVector::zeros(f + s);
            let fixed_part = &map.matrix * &x + &map.offset;
            for (p, &i) in free.iter().enumerate() {
                for (q, &j) in free.iter().enumerate() {
                    kkt[(p, q)] = map.matrix[(i, j)];
                }
                for (q, &r) in active.iter().enumerate() {
                    kkt[(p, f + q)] = a[(r, i)];
                }
                rhs[p] = -fixed_part[i];
            }
            let ax_fixed = a * &x;
            for (p, &r) in active.iter().enumerate() {
                for (q, &j) in free.iter().enumerate() {
                    kkt[(f + p, q)] = a[(r, j)];
                }
                rhs[f + p] = b[r] - ax_fixed[r];
            }
            let Some(sol) = kkt.clone().lu().solve(&rhs) else { continue };
            if !sol.iter().all(|v| v.is_finite()) || (&kkt * &sol - &rhs).amax() > tol {
                continue;
            }
            for (p, &i) in free.iter().enumerate() {
                x[i] = sol[p];
            }
            for (q, &r) in active.iter().enumerate() {
                lambda[r] = sol[f + q];
            }
        }
        if lambda.iter().any(|l| *l < -tol) || geom.violation(&x) > tol {
            continue;
        }
        let g = map.evaluate(&x) + a.tr_mul(&lambda);
        let signs_ok = (0..n).all(|k| match faces[k] {
            Face::Free => true,
            Face::Lower => g[k] >= -tol,
            Face::Upper => g[k] <= tol,
        });
        if signs_ok {
            return Ok(x);
        }
    }
    Err(Error::Numerical(NumericalFailure::new(
        "active-set enumeration",
        candidates.len(),
        f64::NAN,
    )))
}
