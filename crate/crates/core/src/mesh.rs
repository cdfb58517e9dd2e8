//! Nested dyadic simplicial meshes of the unit interval and unit square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Largest level accepted for 1D meshes.
pub const MAX_LEVEL_1D: u32 = 14;
/// Largest level accepted for 2D meshes.
pub const MAX_LEVEL_2D: u32 = 8;

/// Uniform mesh of `[0,1]^dim` with `2^level` cells per axis.
///
/// Vertices are numbered lexicographically with `x` fastest. In 2D every
/// square is split along its `(0,0)–(1,1)` diagonal, which keeps the family
/// nested under refinement.
#[derive(Clone, Debug)]
pub struct DyadicMesh {
    dim: usize,
    level: u32,
    vertices: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
}

/// JSON summary of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub dim: usize,
    pub level: u32,
    pub vertices: usize,
    pub cells: usize,
    pub h: f64,
}

pub fn build_mesh(dim: usize, level: u32) -> Result<DyadicMesh> {
    match dim {
        1 if level > MAX_LEVEL_1D => Err(Error::Capacity(format!(
            "1D level {level} exceeds the limit {MAX_LEVEL_1D}"
        ))),
        2 if level > MAX_LEVEL_2D => Err(Error::Capacity(format!(
            "2D level {level} exceeds the limit {MAX_LEVEL_2D}"
        ))),
        1 | 2 => Ok(DyadicMesh::new(dim, level)),
        _ => Err(Error::domain(format!("unsupported dimension {dim}"))),
    }
}

impl DyadicMesh {
    fn new(dim: usize, level: u32) -> Self {
        let n = 1usize << level;
        let cell = 1.0 / n as f64;
        let mut vertices = Vec::new();
        let mut cells = Vec::new();
        if dim == 1 {
            vertices.extend((0..=n).map(|i| [i as f64 * cell, 0.0]));
            cells.extend((0..n).map(|i| vec![i, i + 1]));
        } else {
            let stride = n + 1;
            for iy in 0..=n {
                for ix in 0..=n {
                    vertices.push([ix as f64 * cell, iy as f64 * cell]);
                }
            }
            for iy in 0..n {
                for ix in 0..n {
                    let v00 = iy * stride + ix;
                    let v10 = v00 + 1;
                    let v01 = v00 + stride;
                    let v11 = v01 + 1;
                    cells.push(vec![v00, v10, v11]);
                    cells.push(vec![v00, v11, v01]);
                }
            }
        }
        Self { dim, level, vertices, cells }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per axis.
    pub fn cells_per_axis(&self) -> usize {
        1 << self.level
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / self.cells_per_axis() as f64
    }

    /// Maximal element diameter.
    pub fn h(&self) -> f64 {
        if self.dim == 1 {
            self.cell_size()
        } else {
            std::f64::consts::SQRT_2 * self.cell_size()
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Coordinates of vertex `i`; only the first `dim` entries are meaningful.
    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    /// Signed volume (length or area) of cell `c`.
    pub fn cell_volume(&self, c: usize) -> f64 {
        self.simplex_volume(&self.cells[c])
    }

    pub(crate) fn simplex_volume(&self, cell: &[usize]) -> f64 {
        let p = |k: usize| self.vertices[cell[k]];
        if self.dim == 1 {
            p(1)[0] - p(0)[0]
        } else {
            let (a, b, c) = (p(0), p(1), p(2));
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
        }
    }

    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            dim: self.dim,
            level: self.level,
            vertices: self.num_vertices(),
            cells: self.cells.len(),
            h: self.h(),
        }
    }

    /// Values of the nodal basis functions that are nonzero at `x`, as
    /// `(vertex, value)` pairs.
    pub fn basis_at(&self, x: [f64; 2]) -> Vec<(usize, f64)> {
        let n = self.cells_per_axis();
        let locate = |coord: f64| -> (usize, f64) {
            let scaled = coord * n as f64;
            let cell = (scaled.floor() as usize).min(n - 1);
            (cell, scaled - cell as f64)
        };
        let mut out = Vec::with_capacity(3);
        let mut push = |v: usize, w: f64| {
            if w != 0.0 {
                out.push((v, w));
            }
        };
        if self.dim == 1 {
            let (i, s) = locate(x[0]);
            push(i, 1.0 - s);
            push(i + 1, s);
        } else {
            let stride = n + 1;
            let (ix, sx) = locate(x[0]);
            let (iy, sy) = locate(x[1]);
            let v00 = iy * stride + ix;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            if sx >= sy {
                push(v00, 1.0 - sx);
                push(v10, sx - sy);
                push(v11, sy);
            } else {
                push(v00, 1.0 - sy);
                push(v11, sx);
                push(v01, sy - sx);
            }
        }
        out
    }
}

/// Matrix `A` with `A[i][j]` the value of coarse basis function `i` at fine
/// vertex `j`.
pub fn restriction_matrix(coarse: &DyadicMesh, fine: &DyadicMesh) -> Result<CsrMatrix> {
    if coarse.dim() != fine.dim() {
        return Err(Error::domain("restriction between meshes of different dimension"));
    }
    if coarse.level() > fine.level() {
        return Err(Error::domain(format!(
            "level {} mesh is not nested in level {}",
            coarse.level(),
            fine.level()
        )));
    }
    if coarse.level() == fine.level() {
        return Ok(CsrMatrix::identity(fine.num_vertices()));
    }
    let mut triplets = Vec::new();
    for (j, &x) in fine.vertices().iter().enumerate() {
        for (i, w) in coarse.basis_at(x) {
            triplets.push((i, j, w));
        }
    }
    Ok(CsrMatrix::from_triplets(coarse.num_vertices(), fine.num_vertices(), &triplets))
}
