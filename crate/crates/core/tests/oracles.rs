//! Dense-algebra oracles on small instances.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use spdelab::fem::assemble;
use spdelab::harness::relative_error;
use spdelab::mesh::{build_mesh, restriction_matrix};
use spdelab::quadrature::{make_spec, scalar_qgamma, QuadratureSolver};

fn dense(m: &spdelab::linalg::CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplets() {
        d[(i, j)] = v;
    }
    d
}

/// `K v = λ M v` with `Vᵀ M V = I`, through `M^{-1/2} K M^{-1/2}`.
fn pencil(k: &DMatrix<f64>, m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let me = SymmetricEigen::new(m.clone());
    let inv_sqrt = &me.eigenvectors
        * DMatrix::from_diagonal(&me.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * me.eigenvectors.transpose();
    let s = &inv_sqrt * k * &inv_sqrt;
    let se = SymmetricEigen::new((&s + s.transpose()) * 0.5);
    (se.eigenvalues, inv_sqrt * se.eigenvectors)
}

#[test]
fn quadrature_matches_spectral_map() {
    for level in 1..=4 {
        let ops = assemble(&build_mesh(1, level).unwrap()).unwrap();
        let (m, k) = (dense(&ops.mass), dense(&ops.a2));
        let (lambda, v) = pencil(&k, &m);
        for gamma in [0.25, 0.5, 0.75] {
            for kq in [0.5, 0.25] {
                let spec = make_spec(gamma, kq).unwrap();
                let solver = QuadratureSolver::new(spec.clone(), &ops).unwrap();
                let g: Vec<f64> = (0..ops.dim()).map(|i| ((i * 7 + 3) % 5) as f64 - 1.7).collect();
                let got = DVector::from_vec(solver.apply(&g).unwrap());
                let scale = DVector::from_iterator(lambda.len(), lambda.iter().map(|l| scalar_qgamma(&spec, *l)));
                let want = &v * DMatrix::from_diagonal(&scale) * v.transpose() * DVector::from_vec(g);
                let err = (&got - &want).norm() / want.norm();
                assert!(err < 1e-8, "level {level} gamma {gamma} k {kq}: {err:e}");
            }
        }
    }
}

#[test]
fn quadrature_close_to_exact_power() {
    let ops = assemble(&build_mesh(1, 4).unwrap()).unwrap();
    let (lambda, v) = pencil(&dense(&ops.a2), &dense(&ops.mass));
    let gamma = 0.5;
    let solver = QuadratureSolver::new(make_spec(gamma, 0.25).unwrap(), &ops).unwrap();
    let g = DVector::from_fn(ops.dim(), |i, _| (i as f64 * 0.3).sin());
    let exact = &v * DMatrix::from_diagonal(&lambda.map(|l| l.powf(-gamma))) * v.transpose() * &g;
    let got = DVector::from_vec(solver.apply(g.as_slice()).unwrap());
    assert!((&got - &exact).norm() / exact.norm() < 1e-7);
}

#[test]
fn eigenvalue_sanity() {
    for (dim, level) in [(1, 3), (1, 5), (2, 2), (2, 3)] {
        let ops = assemble(&build_mesh(dim, level).unwrap()).unwrap();
        let m = SymmetricEigen::new(dense(&ops.mass));
        assert!(m.eigenvalues.iter().all(|l| *l > 0.0));
        let t = SymmetricEigen::new(dense(&ops.stiffness));
        let (imin, lmin) = t
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!(lmin.abs() < 1e-10, "{lmin}");
        let v = t.eigenvectors.column(imin);
        let c = v[0];
        assert!(v.iter().all(|x| (x - c).abs() < 1e-8));
        assert_eq!(t.eigenvalues.iter().filter(|l| l.abs() < 1e-8).count(), 1);
    }
}

#[test]
fn relative_error_five_by_five() {
    let coarse = build_mesh(1, 1).unwrap();
    let fine = build_mesh(1, 2).unwrap();
    let a = restriction_matrix(&coarse, &fine).unwrap();
    let m = assemble(&fine).unwrap().mass;
    let alpha = [0.3, -1.2, 2.0];
    let alpha_ref = [0.1, 0.4, -1.0, 0.7, 2.2];
    // Prolongation by hand: vertex values at 0, 1/4, 1/2, 3/4, 1.
    let prolonged = [0.3, 0.5 * (0.3 - 1.2), -1.2, 0.5 * (-1.2 + 2.0), 2.0];
    let md = dense(&m);
    let d = DVector::from_iterator(5, prolonged.iter().zip(&alpha_ref).map(|(p, r)| p - r));
    let r = DVector::from_row_slice(&alpha_ref);
    let want = ((d.transpose() * &md * &d)[0] / (r.transpose() * &md * &r)[0]).sqrt();
    let got = relative_error(&alpha, &alpha_ref, &a, &m).unwrap();
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
}

#[test]
fn two_dim_mass_against_element_integrals() {
    // Mass entries by a 3-point edge-midpoint rule, exact for quadratics.
    let mesh = build_mesh(2, 2).unwrap();
    let ops = assemble(&mesh).unwrap();
    let n = mesh.num_vertices();
    let mut want = DMatrix::<f64>::zeros(n, n);
    for cell in mesh.cells() {
        let p: Vec<[f64; 2]> = cell.iter().map(|v| mesh.vertex(*v)).collect();
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
        // Barycentric values at the edge midpoints.
        let mids = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                let s: f64 = mids.iter().map(|l| l[a] * l[b]).sum::<f64>() * area / 3.0;
                want[(cell[a], cell[b])] += s;
            }
        }
    }
    let got = dense(&ops.mass);
    assert!((got - want).abs().max() < 1e-15);
}
