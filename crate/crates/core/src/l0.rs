//! Monte Carlo checks for Itô integrals in `L⁰`: the truncated metric
//! `d_p`, ratio estimates for the truncated BDG inequalities and a dyadic
//! Hölder-exponent estimator.
//!
//! The integrals live in `H = ℝ^q` and are driven by a `q`-dimensional
//! Brownian motion on a uniform partition of `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{path_seed, KeyedNormals, StreamTag};

/// `(mean of 1 ∧ s^p)^{1/p}` over distance samples `s`.
pub fn dp_metric(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("d_p of an empty sample".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::domain(format!("d_p needs p >= 1, got {p}")));
    }
    if let Some(s) = samples.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::domain(format!("negative or NaN distance {s}")));
    }
    let mean = samples.iter().map(|s| s.powf(p).min(1.0)).sum::<f64>() / samples.len() as f64;
    Ok(mean.powf(1.0 / p))
}

/// Rule producing `Φ_n = φ_n I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum IntegrandFamily {
    /// `φ_n = c`.
    DeterministicConst { c: f64 },
    /// `φ_n = ‖W(t_n)‖`.
    WienerFunctional,
    /// `φ_n = exp(G²)` with `G` standard normal and known at time 0; not in `L²(Ω)`.
    HeavyTailedScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementaryIntegrand {
    pub dim_q: usize,
    /// Uniform partition `t_n = n / steps`.
    pub steps: usize,
    pub family: IntegrandFamily,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItoPath {
    /// `∫_0^{t_n} Φ dW` for `n = 0..=steps`.
    pub values: Vec<Vec<f64>>,
    /// `max_n ‖∫_0^{t_n} Φ dW‖`.
    pub sup_norm: f64,
    /// `∫_0^1 ‖Φ‖²_{L₂(H)} dt`.
    pub quad_var: f64,
}

impl ElementaryIntegrand {
    pub fn new(dim_q: usize, steps: usize, family: IntegrandFamily) -> Result<Self> {
        if dim_q == 0 || steps == 0 {
            return Err(Error::domain("an elementary integrand needs q >= 1 and at least one interval"));
        }
        Ok(Self { dim_q, steps, family })
    }

    pub fn partition(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| n as f64 / self.steps as f64).collect()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, IntegrandFamily::DeterministicConst { c } if c == 0.0)
    }

    /// `φ_n` from the noise history `w = W(t_n)` and the time-zero variable `g`.
    fn scale(&self, w: &[f64], g: f64) -> f64 {
        match self.family {
            IntegrandFamily::DeterministicConst { c } => c,
            IntegrandFamily::WienerFunctional => w.iter().map(|x| x * x).sum::<f64>().sqrt(),
            IntegrandFamily::HeavyTailedScale => (g * g).exp(),
        }
    }

    /// Runs the defining sum on path `path` of block `seed`. With `keep`
    /// unset only the summary statistics are produced.
    fn run(&self, seed: u64, path: u64, keep: bool) -> ItoPath {
        let q = self.dim_q;
        let dt = 1.0 / self.steps as f64;
        let sdt = dt.sqrt();
        let noise = KeyedNormals::new(seed, StreamTag::Ito).draws(path, q * self.steps);
        let g = KeyedNormals::new(seed, StreamTag::Integrand).single(path);
        let mut w = vec![0.0; q];
        let mut x = vec![0.0; q];
        let mut values = if keep { vec![x.clone()] } else { Vec::new() };
        let mut sup: f64 = 0.0;
        let mut qv = 0.0;
        for n in 0..self.steps {
            let phi = self.scale(&w, g);
            qv += phi * phi * q as f64 * dt;
            for i in 0..q {
                let dw = sdt * noise[n * q + i];
                x[i] += phi * dw;
                w[i] += dw;
            }
            sup = sup.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
            if keep {
                values.push(x.clone());
            }
        }
        ItoPath { values, sup_norm: sup, quad_var: qv }
    }
}

/// Exact evaluation of `∫_0^t Φ dW` at the partition points of path `path`.
pub fn ito_integral_elementary(phi: &ElementaryIntegrand, seed: u64, path: u64) -> ItoPath {
    phi.run(block_seed(seed, 0), path, true)
}

/// Noise seed of list element `i`; element 0 is shared with [`bdg_ratio`].
fn block_seed(seed: u64, i: usize) -> u64 {
    path_seed(seed, i as u64)
}

/// Monte Carlo mean of `‖∫_0^1 Φ dW‖²` and of `∫_0^1 ‖Φ‖² dt`.
pub fn isometry_moments(phi: &ElementaryIntegrand, n_paths: usize, seed: u64) -> Result<(f64, f64)> {
    if n_paths == 0 {
        return Err(Error::InsufficientData("no paths".into()));
    }
    let s = block_seed(seed, 0);
    let pairs: Vec<(f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = phi.run(s, p, true);
            let last = path.values.last().expect("nonempty path");
            (last.iter().map(|v| v * v).sum::<f64>(), path.quad_var)
        })
        .collect();
    let n = n_paths as f64;
    Ok((pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub paths: usize,
}

pub const MIN_BDG_PATHS: usize = 1000;

fn ratio_of(lhs: f64, rhs: f64, paths: usize) -> Option<RatioEstimate> {
    match (lhs == 0.0, rhs == 0.0) {
        (true, true) => Some(RatioEstimate { lhs, rhs, ratio: 0.0, paths }),
        (false, true) => None,
        _ => Some(RatioEstimate { lhs, rhs, ratio: lhs / rhs, paths }),
    }
}

/// `E[1 ∧ sup_t ‖∫_0^t Φ dW‖^p] / E[1 ∧ ∫_0^1 ‖Φ‖² dt]^{p/2}`.
///
/// A vanishing right side with a positive left side is rerun once at ten
/// times the paths before it is reported as a statistical alarm.
pub fn bdg_ratio(phi: &ElementaryIntegrand, p: f64, n_paths: usize, seed: u64) -> Result<RatioEstimate> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("p must be positive, got {p}")));
    }
    if n_paths < MIN_BDG_PATHS {
        return Err(Error::InsufficientData(format!("{n_paths} paths, need at least {MIN_BDG_PATHS}")));
    }
    let estimate = |paths: usize| {
        let s = block_seed(seed, 0);
        let terms: Vec<(f64, f64)> = (0..paths as u64)
            .into_par_iter()
            .map(|k| {
                let path = phi.run(s, k, false);
                (path.sup_norm.powf(p).min(1.0), path.quad_var.min(1.0))
            })
            .collect();
        let n = paths as f64;
        let lhs = terms.iter().map(|t| t.0).sum::<f64>() / n;
        let rhs = (terms.iter().map(|t| t.1).sum::<f64>() / n).powf(p / 2.0);
        (lhs, rhs)
    };
    let (lhs, rhs) = estimate(n_paths);
    if let Some(r) = ratio_of(lhs, rhs, n_paths) {
        return Ok(r);
    }
    let (lhs, rhs) = estimate(10 * n_paths);
    ratio_of(lhs, rhs, 10 * n_paths).ok_or_else(|| {
        Error::StatisticalAlarm(format!("left side {lhs:e} with vanishing right side at {} paths", 10 * n_paths))
    })
}

/// `E[1 ∧ Σ_i sup_t ‖∫_0^t Φ_i dW‖^p] / E[1 ∧ Σ_i (∫_0^1 ‖Φ_i‖² dt)^{p/2}]`,
/// each element driven by its own independent noise block.
pub fn bdg_sum_ratio(phis: &[ElementaryIntegrand], p: f64, n_paths: usize, seed: u64) -> Result<RatioEstimate> {
    if !(p >= 2.0) {
        return Err(Error::domain(format!("the sum inequality needs p >= 2, got {p}")));
    }
    if n_paths < MIN_BDG_PATHS {
        return Err(Error::InsufficientData(format!("{n_paths} paths, need at least {MIN_BDG_PATHS}")));
    }
    let seeds: Vec<u64> = (0..phis.len()).map(|i| block_seed(seed, i)).collect();
    let estimate = |paths: usize| {
        let terms: Vec<(f64, f64)> = (0..paths as u64)
            .into_par_iter()
            .map(|k| {
                let (mut l, mut r) = (0.0, 0.0);
                for (phi, s) in phis.iter().zip(&seeds) {
                    let path = phi.run(*s, k, false);
                    l += path.sup_norm.powf(p);
                    r += path.quad_var.powf(p / 2.0);
                }
                (l.min(1.0), r.min(1.0))
            })
            .collect();
        let n = paths as f64;
        (terms.iter().map(|t| t.0).sum::<f64>() / n, terms.iter().map(|t| t.1).sum::<f64>() / n)
    };
    let (lhs, rhs) = estimate(n_paths);
    if let Some(r) = ratio_of(lhs, rhs, n_paths) {
        return Ok(r);
    }
    let (lhs, rhs) = estimate(10 * n_paths);
    ratio_of(lhs, rhs, 10 * n_paths).ok_or_else(|| {
        Error::StatisticalAlarm(format!("left side {lhs:e} with vanishing right side at {} paths", 10 * n_paths))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// `None` when some `S(m)` vanishes.
    pub exponent: Option<f64>,
    pub degenerate: bool,
    /// `(m, S(m))`.
    pub levels: Vec<(u32, f64)>,
}

/// Slope of `log2 S(m)` against `-m`, where `S(m)` is the largest increment
/// over the dyadic grid of mesh `2^{-m}`.
///
/// `samples[j]` is `x(j 2^{-m_max})`, `j = 0..=2^{m_max}`; coarser grids are
/// subsampled from it. `dist` measures increments.
pub fn holder_exponent<T, D>(samples: &[T], m_min: u32, m_max: u32, dist: D) -> Result<HolderEstimate>
where
    D: Fn(&T, &T) -> f64,
{
    if m_max < m_min || m_max - m_min + 1 < 4 {
        return Err(Error::InsufficientData(format!("levels {m_min}..={m_max}, need at least 4")));
    }
    if m_max >= usize::BITS - 1 || samples.len() != (1usize << m_max) + 1 {
        return Err(Error::domain(format!(
            "{} samples do not form a dyadic grid of level {m_max}",
            samples.len()
        )));
    }
    let levels: Vec<(u32, f64)> = (m_min..=m_max)
        .map(|m| {
            let stride = 1usize << (m_max - m);
            let s = (0..1usize << m)
                .map(|j| dist(&samples[(j + 1) * stride], &samples[j * stride]))
                .fold(0.0, f64::max);
            (m, s)
        })
        .collect();
    if levels.iter().any(|(_, s)| *s == 0.0) {
        return Ok(HolderEstimate { exponent: None, degenerate: true, levels });
    }
    let xs: Vec<f64> = levels.iter().map(|(m, _)| -(*m as f64)).collect();
    let ys: Vec<f64> = levels.iter().map(|(_, s)| s.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(HolderEstimate { exponent: Some(sxy / sxx), degenerate: false, levels })
}

/// Scalar Brownian motion at `j 2^{-m}`, `j = 0..=2^m`.
pub fn brownian_path(seed: u64, m: u32) -> Vec<f64> {
    let n = 1usize << m;
    let sdt = (1.0 / n as f64).sqrt();
    let z = KeyedNormals::new(seed, StreamTag::Brownian).draws(0, n);
    let mut out = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    out.push(w);
    for v in z {
        w += sdt * v;
        out.push(w);
    }
    out
}
