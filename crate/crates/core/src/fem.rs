//! P1 finite-element matrices with zero Neumann boundary conditions.
//!
//! `mass` is `(φ_j, φ_i)`, `stiffness` is `(∇φ_j, ∇φ_i)` and `a2` is the
//! matrix of `(u, v) + (∇u, ∇v)`, i.e. `mass + stiffness`. All element
//! integrals are evaluated in closed form.

use std::sync::Arc;

use crate::error::Result;
use crate::linalg::{BandedCholesky, CsrMatrix};
use crate::mesh::DyadicMesh;

#[derive(Clone, Debug)]
pub struct FemOperators {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub a2: CsrMatrix,
    /// `L` with `L Lᵀ = mass`.
    pub mass_chol: Arc<BandedCholesky>,
}

impl FemOperators {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Factorization of the backward-Euler system matrix `M + dt·T`.
    pub fn system_matrix(&self, dt: f64) -> CsrMatrix {
        self.mass.combine(1.0, &self.stiffness, dt)
    }

    pub fn sys_factor(&self, dt: f64) -> Result<BandedCholesky> {
        BandedCholesky::factor(&self.system_matrix(dt))
    }
}

/// Element mass and stiffness matrices for one cell, row-major.
fn element_matrices(mesh: &DyadicMesh, cell: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let vol = mesh.simplex_volume(cell);
    if mesh.dim() == 1 {
        let h = vol;
        (
            vec![h / 3.0, h / 6.0, h / 6.0, h / 3.0],
            vec![1.0 / h, -1.0 / h, -1.0 / h, 1.0 / h],
        )
    } else {
        let p: Vec<[f64; 2]> = cell.iter().map(|&v| mesh.vertex(v)).collect();
        // Gradients of the barycentric coordinates: ∇λ_k = rot(p_{k+2} - p_{k+1}) / (2|τ|).
        let grads: Vec<[f64; 2]> = (0..3)
            .map(|k| {
                let a = p[(k + 1) % 3];
                let b = p[(k + 2) % 3];
                [(a[1] - b[1]) / (2.0 * vol), (b[0] - a[0]) / (2.0 * vol)]
            })
            .collect();
        let mut m = vec![0.0; 9];
        let mut t = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                m[3 * i + j] = if i == j { vol / 6.0 } else { vol / 12.0 };
                t[3 * i + j] = vol * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            }
        }
        (m, t)
    }
}

pub fn assemble(mesh: &DyadicMesh) -> Result<FemOperators> {
    let n = mesh.num_vertices();
    let mut mass = Vec::new();
    let mut stiff = Vec::new();
    for cell in mesh.cells() {
        let k = cell.len();
        let (me, te) = element_matrices(mesh, cell);
        for a in 0..k {
            for b in 0..k {
                mass.push((cell[a], cell[b], me[k * a + b]));
                stiff.push((cell[a], cell[b], te[k * a + b]));
            }
        }
    }
    let mass = CsrMatrix::from_triplets(n, n, &mass);
    let stiffness = CsrMatrix::from_triplets(n, n, &stiff);
    let a2 = mass.add(&stiffness);
    let mass_chol = Arc::new(mass_factor(&mass)?);
    Ok(FemOperators { mass, stiffness, a2, mass_chol })
}

/// Cholesky factor `L` with `L Lᵀ = m`.
pub fn mass_factor(m: &CsrMatrix) -> Result<BandedCholesky> {
    BandedCholesky::factor(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    fn dense_product(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = l.len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                out[i][j] = (0..n).map(|k| l[i][k] * l[j][k]).sum();
            }
        }
        out
    }

    #[test]
    fn one_dim_level_two_closed_forms() {
        let mesh = build_mesh(1, 2).unwrap();
        let ops = assemble(&mesh).unwrap();
        let h = 0.25;
        for i in 1..4 {
            assert!((ops.mass.get(i, i - 1) - h / 6.0).abs() < 1e-15);
            assert!((ops.mass.get(i, i) - 4.0 * h / 6.0).abs() < 1e-15);
            assert!((ops.mass.get(i, i + 1) - h / 6.0).abs() < 1e-15);
            assert!((ops.stiffness.get(i, i) - 2.0 / h).abs() < 1e-13);
            assert!((ops.stiffness.get(i, i + 1) + 1.0 / h).abs() < 1e-13);
        }
        assert!((ops.mass.get(0, 0) - 2.0 * h / 6.0).abs() < 1e-15);
        assert!((ops.mass.get(0, 1) - h / 6.0).abs() < 1e-15);
        assert!((ops.mass.get(4, 4) - 2.0 * h / 6.0).abs() < 1e-15);
    }

    #[test]
    fn neumann_kernel_and_total_measure() {
        for (dim, level) in [(1, 0), (1, 5), (2, 0), (2, 3)] {
            let mesh = build_mesh(dim, level).unwrap();
            let ops = assemble(&mesh).unwrap();
            let ones = vec![1.0; ops.dim()];
            let t1 = ops.stiffness.matvec(&ones);
            assert!(t1.iter().all(|v| v.abs() < 1e-12), "{t1:?}");
            let total: f64 = ops.mass.matvec(&ones).iter().sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_and_k_is_m_plus_t() {
        for dim in [1, 2] {
            let ops = assemble(&build_mesh(dim, 3).unwrap()).unwrap();
            for m in [&ops.mass, &ops.stiffness, &ops.a2] {
                for (i, j, v) in m.triplets() {
                    assert_eq!(v, m.get(j, i));
                }
            }
            for (i, j, v) in ops.a2.triplets() {
                assert_eq!(v, ops.mass.get(i, j) + ops.stiffness.get(i, j));
            }
        }
    }

    #[test]
    fn mass_factor_identity_and_diagonal() {
        let id = CsrMatrix::identity(3);
        assert_eq!(mass_factor(&id).unwrap().to_dense(), id.to_dense());
        let d = CsrMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (1, 1, 9.0)]);
        assert_eq!(mass_factor(&d).unwrap().to_dense(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn mass_factor_round_trip() {
        for dim in [1, 2] {
            let ops = assemble(&build_mesh(dim, 2).unwrap()).unwrap();
            let llt = dense_product(&ops.mass_chol.to_dense());
            let m = ops.mass.to_dense();
            let mut diff = 0.0;
            let mut norm = 0.0;
            for i in 0..m.len() {
                for j in 0..m.len() {
                    diff += (llt[i][j] - m[i][j]).powi(2);
                    norm += m[i][j].powi(2);
                }
            }
            assert!((diff / norm).sqrt() < 1e-12);
        }
    }

    #[test]
    fn two_dim_interior_stencil() {
        // Interior vertex of the single-diagonal split: 6 adjacent
        // triangles of area c²/2, five-point Laplacian, zero diagonal coupling.
        let mesh = build_mesh(2, 2).unwrap();
        let ops = assemble(&mesh).unwrap();
        let c = mesh.cell_size();
        let stride = 5;
        let i = 2 * stride + 2;
        assert!((ops.mass.get(i, i) - c * c / 2.0).abs() < 1e-15);
        assert!((ops.stiffness.get(i, i) - 4.0).abs() < 1e-13);
        assert!((ops.stiffness.get(i, i + 1) + 1.0).abs() < 1e-13);
        assert!((ops.stiffness.get(i, i + stride) + 1.0).abs() < 1e-13);
        assert!(ops.stiffness.get(i, i + stride + 1).abs() < 1e-13);
        assert!((ops.mass.get(i, i + stride + 1) - c * c / 12.0).abs() < 1e-15);
        assert_eq!(ops.mass.get(i, i + stride - 1), 0.0);
    }
}
