//! Monte Carlo checks with fixed seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spdelab::driver::sample_driver;
use spdelab::fem::assemble;
use spdelab::harness::{convergence_study, fit_rate, Axis};
use spdelab::l0::{
    bdg_ratio, bdg_sum_ratio, dp_metric, holder_exponent, isometry_moments, ElementaryIntegrand, IntegrandFamily,
};
use spdelab::mesh::build_mesh;
use spdelab::scheme::{simulate_path, InitialData, SchemeConfig, StepMode};
use spdelab::wiener::NoiseStream;

fn small(gamma: f64, level: u32, steps: usize, seed: u64) -> SchemeConfig {
    SchemeConfig {
        dim: 1,
        gamma,
        k: 0.5,
        space_level: level,
        time_steps: steps,
        mode: StepMode::FinalTime,
        initial: InitialData::Zero,
        master_seed: seed,
        n_modes: 100,
    }
}

#[test]
fn projected_increment_covariance_is_dt_mass() {
    let ops = assemble(&build_mesh(1, 2).unwrap()).unwrap();
    let n = ops.dim();
    let draws = 100_000;
    let stream = NoiseStream::new(17, 2, draws);
    let mut cov = vec![0.0; n * n];
    for s in 0..draws {
        let g = stream.fine_increment(s, &ops.mass_chol).unwrap().values;
        for i in 0..n {
            for j in 0..n {
                cov[i * n + j] += g[i] * g[j];
            }
        }
    }
    let dt = stream.fine_dt();
    let (mut diff, mut norm) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let want = dt * ops.mass.get(i, j);
            let got = cov[i * n + j] / draws as f64;
            diff += (got - want).powi(2);
            norm += want * want;
        }
    }
    let rel = (diff / norm).sqrt();
    assert!(rel < 0.03, "relative Frobenius error {rel}");
}

#[test]
fn final_state_has_mean_zero() {
    let cfg = small(0.5, 3, 16, 5);
    let n_paths = 1000;
    let states: Vec<Vec<f64>> = (0..n_paths).map(|p| simulate_path(&cfg, p, None).unwrap().state.alpha).collect();
    let dofs = states[0].len();
    for i in 0..dofs {
        let mean = states.iter().map(|s| s[i]).sum::<f64>() / n_paths as f64;
        let var = states.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
        let se = (var / n_paths as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "component {i}: mean {mean} se {se}");
    }
    let ops = assemble(&build_mesh(1, 3).unwrap()).unwrap();
    let weights = ops.mass.matvec(&vec![1.0; dofs]);
    let integrals: Vec<f64> =
        states.iter().map(|s| s.iter().zip(&weights).map(|(a, w)| a * w).sum()).collect();
    let mean = integrals.iter().sum::<f64>() / n_paths as f64;
    let var = integrals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
    assert!(mean.abs() < 3.0 * (var / n_paths as f64).sqrt());
}

#[test]
fn driver_is_nearly_lipschitz() {
    let m_max = 12;
    let grid: Vec<f64> = (0..=1usize << m_max).map(|j| j as f64 / (1u64 << m_max) as f64).collect();
    let mut total = 0.0;
    for seed in 0..20 {
        let d = sample_driver(seed, 1000).unwrap();
        let f: Vec<f64> = grid.iter().map(|t| d.eval_f(*t).unwrap()).collect();
        total += holder_exponent(&f, 4, m_max, |a, b| (a - b).abs()).unwrap().exponent.unwrap();
    }
    assert!(total / 20.0 >= 0.9, "mean exponent {}", total / 20.0);
}

#[test]
fn dp_detects_convergence_in_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let mut prev = f64::INFINITY;
    for n in [1.0, 10.0, 100.0] {
        let d: Vec<f64> = z.iter().map(|v| v.abs() / n).collect();
        let now = dp_metric(&d, 1.0).unwrap();
        assert!(now < prev, "n {n}: {now} >= {prev}");
        prev = now;
    }
    assert!(prev < 0.01);
}

#[test]
fn isometry_for_wiener_functional() {
    let steps = 16;
    let phi = ElementaryIntegrand::new(1, steps, IntegrandFamily::WienerFunctional).unwrap();
    let (lhs, rhs) = isometry_moments(&phi, 100_000, 9).unwrap();
    let exact = (steps - 1) as f64 / (2 * steps) as f64;
    assert!((rhs - exact).abs() < 0.03 * exact, "{rhs} vs {exact}");
    assert!((lhs - exact).abs() < 0.03 * exact, "{lhs} vs {exact}");
}

#[test]
fn sum_ratio_stays_bounded_in_length() {
    let phi = ElementaryIntegrand::new(1, 16, IntegrandFamily::WienerFunctional).unwrap();
    let ratios: Vec<f64> = [1, 4, 16]
        .iter()
        .map(|m| bdg_sum_ratio(&vec![phi.clone(); *m], 2.0, 2000, 21).unwrap().ratio)
        .collect();
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min <= 2.0, "{ratios:?}");
}

#[test]
fn heavy_tailed_integrand_has_finite_ratio() {
    let phi = ElementaryIntegrand::new(2, 16, IntegrandFamily::HeavyTailedScale).unwrap();
    for p in [1.0, 2.0, 4.0] {
        let r = bdg_ratio(&phi, p, 5000, 8).unwrap();
        assert!(r.ratio.is_finite() && r.ratio > 0.0, "p {p}: {r:?}");
        assert!(r.lhs <= 1.0 && r.rhs <= 1.0);
    }
}

#[test]
fn noisy_power_law_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pts: Vec<(f64, f64)> = (2..=7)
        .map(|l| {
            let h = 2f64.powi(-l);
            (h, 0.7 * h.powf(1.5) * (1.0 + rng.random_range(-0.05..0.05)))
        })
        .collect();
    let r = fit_rate(&pts).unwrap();
    assert!((1.4..=1.6).contains(&r), "{r}");
}

#[test]
fn reference_refinement_barely_moves_errors() {
    let cfg = small(0.75, 6, 64, 4);
    let a = convergence_study(&cfg, Axis::Space, &[2, 3, 4], 6, 3).unwrap();
    let b = convergence_study(&cfg, Axis::Space, &[2, 3, 4], 7, 3).unwrap();
    for (x, y) in a.levels.iter().zip(&b.levels) {
        assert!((x.mean_error - y.mean_error).abs() < x.mean_error, "level {}", x.level);
    }
    let means: Vec<f64> = b.levels.iter().map(|l| l.mean_error).collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}
