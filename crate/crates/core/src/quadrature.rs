//! Sinc quadrature for negative fractional powers of the pencil `(M, K)`.
//!
//! For `γ ∈ (0,1)`,
//!
//! ```text
//! Q_k^{-γ} g = (k sin(πγ)/π) Σ_{j=-M}^{N} e^{(1-γ) y_j} (e^{y_j} M + K)^{-1} g,   y_j = j k,
//! N = ⌈π²/(2γk²)⌉,  M = ⌈π²/(2(1-γ)k²)⌉.
//! ```
//!
//! Given a load vector `g` the result is the nodal coefficient vector of
//! `K_h^{-γ}` applied to the function represented by `g`. The endpoints
//! `γ = 1` and `γ = 0` are exact: `K^{-1} g` and `M^{-1} g`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::linalg::{check_backward_error, checked_solve, BandedCholesky, CsrMatrix};

/// Shifted factorizations are kept in memory only while their total size
/// stays below this budget; larger problems refactor on every apply.
pub const FACTOR_CACHE_BYTES: usize = 64 << 20;

const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureRule {
    /// `γ = 0`: the noise is not colored.
    Identity,
    /// `γ = 1`: exact inverse of `K`.
    FullInverse,
    Sinc { n_pos: usize, n_neg: usize, nodes: Vec<f64>, weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub gamma: f64,
    pub k: f64,
    pub rule: QuadratureRule,
}

pub fn make_spec(gamma: f64, k: f64) -> Result<QuadratureSpec> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::domain(format!("gamma = {gamma} is outside [0, 1]")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("quadrature resolution k = {k} must be positive")));
    }
    let rule = if gamma == 0.0 {
        QuadratureRule::Identity
    } else if gamma == 1.0 {
        QuadratureRule::FullInverse
    } else {
        let n_pos = (PI * PI / (2.0 * gamma * k * k)).ceil() as usize;
        let n_neg = (PI * PI / (2.0 * (1.0 - gamma) * k * k)).ceil() as usize;
        let scale = k * (PI * gamma).sin() / PI;
        let nodes: Vec<f64> = (-(n_neg as i64)..=n_pos as i64).map(|j| j as f64 * k).collect();
        let weights = nodes.iter().map(|y| scale * ((1.0 - gamma) * y).exp()).collect();
        QuadratureRule::Sinc { n_pos, n_neg, nodes, weights }
    };
    Ok(QuadratureSpec { gamma, k, rule })
}

/// Quadrature approximation of `a^{-γ}` for a scalar `a > 0`.
pub fn scalar_qgamma(spec: &QuadratureSpec, a: f64) -> f64 {
    match &spec.rule {
        QuadratureRule::Identity => 1.0,
        QuadratureRule::FullInverse => 1.0 / a,
        QuadratureRule::Sinc { .. } => node_terms(spec)
            .iter()
            .map(|t| t.coef / (t.mass_coef + t.a2_coef * a))
            .sum(),
    }
}

/// One quadrature term `coef · (mass_coef M + a2_coef K)^{-1}`.
///
/// For `y ≥ 0` the term `w e^{...}(e^y M + K)^{-1}` is rewritten as
/// `s e^{-γy} (M + e^{-y} K)^{-1}` so that large nodes do not overflow.
#[derive(Clone, Copy, Debug)]
struct NodeTerm {
    coef: f64,
    mass_coef: f64,
    a2_coef: f64,
}

fn node_terms(spec: &QuadratureSpec) -> Vec<NodeTerm> {
    let QuadratureRule::Sinc { nodes, .. } = &spec.rule else {
        return Vec::new();
    };
    let scale = spec.k * (PI * spec.gamma).sin() / PI;
    nodes
        .iter()
        .map(|&y| {
            if y >= 0.0 {
                NodeTerm { coef: scale * (-spec.gamma * y).exp(), mass_coef: 1.0, a2_coef: (-y).exp() }
            } else {
                NodeTerm { coef: scale * ((1.0 - spec.gamma) * y).exp(), mass_coef: y.exp(), a2_coef: 1.0 }
            }
        })
        .collect()
}

/// Applies `Q_k^{-γ}` of the pencil `(M, K)` of one mesh level.
///
/// Immutable after construction and safe to share between threads.
pub struct QuadratureSolver {
    spec: QuadratureSpec,
    mass: CsrMatrix,
    a2: CsrMatrix,
    mass_chol: std::sync::Arc<BandedCholesky>,
    terms: Vec<NodeTerm>,
    kind: SolverKind,
}

enum SolverKind {
    Identity,
    FullInverse(BandedCholesky),
    /// One factorization per node, when they fit in the cache budget.
    Cached(Vec<BandedCholesky>),
    Streaming,
}

impl QuadratureSolver {
    pub fn new(spec: QuadratureSpec, ops: &FemOperators) -> Result<Self> {
        Self::with_cache_budget(spec, ops, FACTOR_CACHE_BYTES)
    }

    pub fn with_cache_budget(spec: QuadratureSpec, ops: &FemOperators, budget: usize) -> Result<Self> {
        let terms = node_terms(&spec);
        let kind = match &spec.rule {
            QuadratureRule::Identity => SolverKind::Identity,
            QuadratureRule::FullInverse => SolverKind::FullInverse(BandedCholesky::factor(&ops.a2)?),
            QuadratureRule::Sinc { .. } => {
                let per_factor = ops.dim() * (ops.mass.half_bandwidth() + 1) * 8;
                if per_factor * terms.len() <= budget {
                    let factors = terms
                        .par_iter()
                        .map(|t| BandedCholesky::factor(&shifted(&ops.mass, &ops.a2, t)))
                        .collect::<Result<Vec<_>>>()?;
                    SolverKind::Cached(factors)
                } else {
                    SolverKind::Streaming
                }
            }
        };
        Ok(Self {
            spec,
            mass: ops.mass.clone(),
            a2: ops.a2.clone(),
            mass_chol: ops.mass_chol.clone(),
            terms,
            kind,
        })
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.apply_many(&[g.to_vec()])?;
        Ok(out.pop().expect("one right-hand side"))
    }

    /// Applies the operator to several load vectors, factorizing each node
    /// once when the factors are not cached.
    pub fn apply_many(&self, gs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        if let Some(g) = gs.iter().find(|g| g.len() != n) {
            return Err(Error::domain(format!("load vector of length {} for {n} dofs", g.len())));
        }
        match &self.kind {
            SolverKind::Identity => gs.iter().map(|g| Ok(self.mass_chol.solve(g))).collect(),
            SolverKind::FullInverse(f) => {
                gs.iter().map(|g| checked_solve(&self.a2, f, g, SOLVE_TOLERANCE)).collect()
            }
            SolverKind::Cached(factors) => gs
                .iter()
                .map(|g| {
                    let mut acc = vec![0.0; n];
                    for (f, t) in factors.iter().zip(&self.terms) {
                        let x = f.solve(g);
                        check_residual(&self.mass, &self.a2, t, &x, g)?;
                        crate::linalg::axpy(t.coef, &x, &mut acc);
                    }
                    Ok(acc)
                })
                .collect(),
            SolverKind::Streaming => {
                // Per-node contributions are computed in parallel and summed in
                // node order so the result does not depend on scheduling.
                let contributions = self
                    .terms
                    .par_iter()
                    .map(|t| {
                        let a = shifted(&self.mass, &self.a2, t);
                        let f = BandedCholesky::factor(&a)?;
                        gs.iter()
                            .map(|g| {
                                let mut x = checked_solve(&a, &f, g, SOLVE_TOLERANCE)?;
                                x.iter_mut().for_each(|v| *v *= t.coef);
                                Ok(x)
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut out = vec![vec![0.0; n]; gs.len()];
                for per_node in contributions {
                    for (acc, x) in out.iter_mut().zip(per_node) {
                        crate::linalg::axpy(1.0, &x, acc);
                    }
                }
                Ok(out)
            }
        }
    }
}

fn shifted(mass: &CsrMatrix, a2: &CsrMatrix, t: &NodeTerm) -> CsrMatrix {
    mass.combine(t.mass_coef, a2, t.a2_coef)
}

/// Residual check of a shifted solve; `‖c₁M + c₂K‖` is bounded by `c₁‖M‖ + c₂‖K‖`.
fn check_residual(mass: &CsrMatrix, a2: &CsrMatrix, t: &NodeTerm, x: &[f64], g: &[f64]) -> Result<()> {
    let mx = mass.matvec(x);
    let kx = a2.matvec(x);
    let r: Vec<f64> = (0..g.len()).map(|i| t.mass_coef * mx[i] + t.a2_coef * kx[i] - g[i]).collect();
    let a_norm = t.mass_coef * mass.norm_inf() + t.a2_coef * a2.norm_inf();
    check_backward_error(&r, a_norm, x, g, SOLVE_TOLERANCE).map_err(|eta| {
        Error::numerical(format!(
            "shifted solve ({:e} M + {:e} K) has relative residual {eta:e}",
            t.mass_coef, t.a2_coef
        ))
    })?;
    Ok(())
}

/// Largest quadrature resolution compatible with the spatial rate for mesh
/// size `h`: `k ≤ -(π²/2) / ((2γ+1) log h)`.
pub fn max_resolution_for(gamma: f64, h: f64) -> f64 {
    -(PI * PI / 2.0) / ((2.0 * gamma + 1.0) * h.ln())
}
