//! The scalar noise amplitude `b = exp(f²)`, with `f = (I - ∂²_t)^{-1} 𝒲`
//! realized through its Neumann cosine expansion on `[0, 1]`:
//!
//! ```text
//! f(t) = ξ_0 + Σ_{n≥1} (1 + π²n²)^{-1} ξ_n √2 cos(πnt),   ξ_n iid N(0,1).
//! ```
//!
//! The series is truncated after `n_modes` terms. The omitted tail is bounded
//! by `√2 / (π² n_modes)`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{KeyedNormals, StreamTag};

pub const DEFAULT_MODES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarDriver {
    pub seed: u64,
    pub n_modes: usize,
    /// `ξ_0 ..= ξ_{n_modes}`.
    pub coeffs: Vec<f64>,
}

/// Draws the coefficients. Mode `n` always comes from key stream `n`, so
/// raising `n_modes` keeps the existing coefficients.
pub fn sample_driver(seed: u64, n_modes: usize) -> Result<ScalarDriver> {
    if n_modes == 0 {
        return Err(Error::domain("the driver needs at least one mode"));
    }
    let keyed = KeyedNormals::new(seed, StreamTag::Driver);
    let coeffs = (0..=n_modes as u64).map(|n| keyed.single(n)).collect();
    Ok(ScalarDriver { seed, n_modes, coeffs })
}

impl ScalarDriver {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        let n_modes = coeffs.len().saturating_sub(1);
        Self { seed: 0, n_modes, coeffs }
    }

    pub fn eval_f(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("driver evaluated at t = {t} outside [0, 1]")));
        }
        let Some((&xi0, rest)) = self.coeffs.split_first() else {
            return Ok(0.0);
        };
        // cos(πnt) by repeated rotation.
        let (s1, c1) = (PI * t).sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let mut sum = 0.0;
        for (i, xi) in rest.iter().enumerate() {
            let n = (i + 1) as f64;
            (c, s) = (c * c1 - s * s1, s * c1 + c * s1);
            sum += xi * c / (1.0 + PI * PI * n * n);
        }
        Ok(xi0 + SQRT_2 * sum)
    }

    pub fn eval_b(&self, t: f64) -> Result<f64> {
        let f = self.eval_f(t)?;
        Ok((f * f).exp())
    }

    /// `b(n/steps)` for `n = 0..steps`.
    pub fn b_on_grid(&self, steps: usize) -> Result<Vec<f64>> {
        (0..steps).map(|n| self.eval_b(n as f64 / steps as f64)).collect()
    }
}

/// Bound on the truncated tail `Σ_{n>N} √2 (1+π²n²)^{-1}`.
pub fn tail_bound(n_modes: usize) -> f64 {
    SQRT_2 / (PI * PI * n_modes as f64)
}
