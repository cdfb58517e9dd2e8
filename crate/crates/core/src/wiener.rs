//! Projected cylindrical Wiener increments and their coarse-level coupling.
//!
//! At the reference level the increment over fine step `n` is the load vector
//! `((φ̃_i, π_h̃ ΔW))_i = Δt̃^{1/2} L_M ϱ_n` with `ϱ_n` the keyed normals of step
//! `n`. Coarser time steps sum consecutive fine increments; coarser meshes
//! apply the restriction matrix `A`, since `φ_i = Σ_j φ_i(x̃_j) φ̃_j`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{BandedCholesky, CsrMatrix};
use crate::rng::{KeyedNormals, StreamTag};

#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    fine_level: u32,
    fine_steps: usize,
    keyed: KeyedNormals,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedIncrement {
    pub values: Vec<f64>,
    pub level: u32,
    /// Fine steps covered by this increment.
    pub step_range: Range<usize>,
}

impl NoiseStream {
    pub fn new(seed: u64, fine_level: u32, fine_steps: usize) -> Self {
        Self { seed, fine_level, fine_steps, keyed: KeyedNormals::new(seed, StreamTag::Wiener) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fine_level(&self) -> u32 {
        self.fine_level
    }

    pub fn fine_steps(&self) -> usize {
        self.fine_steps
    }

    pub fn fine_dt(&self) -> f64 {
        1.0 / self.fine_steps as f64
    }

    /// Keyed normals `ϱ_n` of fine step `n`.
    pub fn normals(&self, n: usize, dofs: usize) -> Vec<f64> {
        self.keyed.draws(n as u64, dofs)
    }

    pub fn fine_increment(&self, n: usize, mass_chol: &BandedCholesky) -> Result<ProjectedIncrement> {
        if n >= self.fine_steps {
            return Err(Error::domain(format!(
                "step {n} outside the {} reference steps",
                self.fine_steps
            )));
        }
        let rho = self.normals(n, mass_chol.dim());
        let scale = self.fine_dt().sqrt();
        let values = mass_chol.lower_mul(&rho).into_iter().map(|v| scale * v).collect();
        Ok(ProjectedIncrement { values, level: self.fine_level, step_range: n..n + 1 })
    }

    /// Sum of the fine increments over `[coarse_step·ratio, (coarse_step+1)·ratio)`.
    pub fn aggregate_increment(
        &self,
        coarse_step: usize,
        ratio: usize,
        mass_chol: &BandedCholesky,
    ) -> Result<ProjectedIncrement> {
        if ratio == 0 || self.fine_steps % ratio != 0 {
            return Err(Error::domain(format!(
                "time ratio {ratio} does not divide {} reference steps",
                self.fine_steps
            )));
        }
        if coarse_step >= self.fine_steps / ratio {
            return Err(Error::domain(format!("coarse step {coarse_step} out of range")));
        }
        let start = coarse_step * ratio;
        let mut total = self.fine_increment(start, mass_chol)?;
        for n in start + 1..start + ratio {
            let inc = self.fine_increment(n, mass_chol)?;
            total.values.iter_mut().zip(&inc.values).for_each(|(a, b)| *a += b);
        }
        total.step_range = start..start + ratio;
        Ok(total)
    }
}

/// Coarse-level increment `A · g_fine`.
pub fn restrict_increment(
    restriction: &CsrMatrix,
    coarse_level: u32,
    g_fine: &ProjectedIncrement,
) -> Result<ProjectedIncrement> {
    if restriction.ncols() != g_fine.values.len() {
        return Err(Error::domain(format!(
            "restriction has {} columns but the increment has {} entries",
            restriction.ncols(),
            g_fine.values.len()
        )));
    }
    Ok(ProjectedIncrement {
        values: restriction.matvec(&g_fine.values),
        level: coarse_level,
        step_range: g_fine.step_range.clone(),
    })
}

/// Everything needed to produce the noise of one coarse discretization from
/// the reference stream.
#[derive(Clone, Copy)]
pub struct CoupledNoise<'a> {
    pub stream: &'a NoiseStream,
    /// Mass factor of the reference level.
    pub fine_chol: &'a BandedCholesky,
    /// Coarse-by-reference restriction matrix.
    pub restriction: &'a CsrMatrix,
    pub coarse_level: u32,
}

impl CoupledNoise<'_> {
    /// Increment of coarse step `n` when the coarse scheme takes `steps` steps.
    pub fn increment(&self, n: usize, steps: usize) -> Result<ProjectedIncrement> {
        if steps == 0 || self.stream.fine_steps() % steps != 0 {
            return Err(Error::domain(format!(
                "{steps} time steps do not divide the {} reference steps",
                self.stream.fine_steps()
            )));
        }
        let ratio = self.stream.fine_steps() / steps;
        let g = self.stream.aggregate_increment(n, ratio, self.fine_chol)?;
        restrict_increment(self.restriction, self.coarse_level, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble;
    use crate::mesh::{build_mesh, restriction_matrix};

    #[test]
    fn deterministic_replay() {
        let ops = assemble(&build_mesh(1, 3).unwrap()).unwrap();
        let s = NoiseStream::new(17, 3, 64);
        let a = s.fine_increment(5, &ops.mass_chol).unwrap();
        let b = s.fine_increment(5, &ops.mass_chol).unwrap();
        assert_eq!(a, b);
        assert!(s.fine_increment(64, &ops.mass_chol).is_err());
    }

    #[test]
    fn aggregation_is_a_sum() {
        let ops = assemble(&build_mesh(1, 2).unwrap()).unwrap();
        let s = NoiseStream::new(3, 2, 16);
        assert_eq!(
            s.aggregate_increment(4, 1, &ops.mass_chol).unwrap(),
            s.fine_increment(4, &ops.mass_chol).unwrap()
        );
        let pair = s.aggregate_increment(3, 2, &ops.mass_chol).unwrap();
        let a = s.fine_increment(6, &ops.mass_chol).unwrap();
        let b = s.fine_increment(7, &ops.mass_chol).unwrap();
        let sum: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        assert_eq!(pair.values, sum);
        assert_eq!(pair.step_range, 6..8);
        assert!(s.aggregate_increment(0, 3, &ops.mass_chol).is_err());
        assert!(s.aggregate_increment(8, 2, &ops.mass_chol).is_err());
    }

    #[test]
    fn restriction_of_unit_vector() {
        let coarse = build_mesh(1, 1).unwrap();
        let fine = build_mesh(1, 2).unwrap();
        let a = restriction_matrix(&coarse, &fine).unwrap();
        let g = ProjectedIncrement { values: vec![0.0, 1.0, 0.0, 0.0, 0.0], level: 2, step_range: 0..1 };
        let r = restrict_increment(&a, 1, &g).unwrap();
        assert_eq!(r.values, vec![0.5, 0.5, 0.0]);
        let id = CsrMatrix::identity(5);
        assert_eq!(restrict_increment(&id, 2, &g).unwrap().values, g.values);
        let short = ProjectedIncrement { values: vec![1.0; 3], level: 1, step_range: 0..1 };
        assert!(restrict_increment(&a, 1, &short).is_err());
    }

    #[test]
    fn restriction_preserves_total_load() {
        let coarse = build_mesh(2, 1).unwrap();
        let fine = build_mesh(2, 3).unwrap();
        let a = restriction_matrix(&coarse, &fine).unwrap();
        let ops = assemble(&fine).unwrap();
        let s = NoiseStream::new(8, 3, 4);
        let g = s.fine_increment(1, &ops.mass_chol).unwrap();
        let r = restrict_increment(&a, 1, &g).unwrap();
        let before: f64 = g.values.iter().sum();
        let after: f64 = r.values.iter().sum();
        assert!((before - after).abs() < 1e-14);
    }
}
