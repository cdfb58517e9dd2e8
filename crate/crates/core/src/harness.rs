//! Relative pathwise errors against a coupled reference solution, dyadic
//! convergence studies and empirical rate fits.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{sample_driver, ScalarDriver};
use crate::error::{Error, Result};
use crate::fem::{assemble, FemOperators};
use crate::linalg::{BandedCholesky, CsrMatrix};
use crate::mesh::{build_mesh, restriction_matrix, DyadicMesh};
use crate::rng::path_seed;
use crate::scheme::{SchemeConfig, Stepper, SOLVE_TOLERANCE};
use crate::wiener::{CoupledNoise, NoiseStream};

/// Mean errors below this are treated as solver noise.
pub const SATURATION: f64 = 10.0 * SOLVE_TOLERANCE;

/// Time Hölder exponent of `b` used for the temporal rate cap.
pub const DRIVER_HOLDER: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Space,
    Time,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Space => "space",
            Axis::Time => "time",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    /// Mesh level for the space axis, `log2 N` for the time axis.
    pub level: u32,
    /// `h` or `Δt`.
    pub resolution: f64,
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub axis: Axis,
    pub dim: usize,
    pub gamma: f64,
    /// Coarse to fine.
    pub levels: Vec<LevelResult>,
    pub fitted_rate: Option<f64>,
    pub theoretical_rate: f64,
    pub paths: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
}

/// `‖Aᵀα - α̃‖_M / ‖α̃‖_M` on the reference mesh.
pub fn relative_error(
    alpha_coarse: &[f64],
    alpha_ref: &[f64],
    restriction: &CsrMatrix,
    mass_ref: &CsrMatrix,
) -> Result<f64> {
    if restriction.nrows() != alpha_coarse.len()
        || restriction.ncols() != alpha_ref.len()
        || mass_ref.nrows() != alpha_ref.len()
    {
        return Err(Error::domain(format!(
            "inconsistent sizes: coarse {}, reference {}, restriction {}x{}, mass {}",
            alpha_coarse.len(),
            alpha_ref.len(),
            restriction.nrows(),
            restriction.ncols(),
            mass_ref.nrows()
        )));
    }
    let reference = crate::linalg::m_norm(mass_ref, alpha_ref);
    if reference == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let mut diff = restriction.transpose_matvec(alpha_coarse);
    diff.iter_mut().zip(alpha_ref).for_each(|(d, r)| *d -= r);
    Ok(crate::linalg::m_norm(mass_ref, &diff) / reference)
}

/// `(space, time)` with space `= min(2, 2γ + 1 - d/2)` and time
/// `= min(space/2, β)`.
pub fn theoretical_rates(gamma: f64, dim: usize, beta: f64) -> (f64, f64) {
    let space = (2.0 * gamma + 1.0 - dim as f64 / 2.0).min(2.0);
    (space, (space / 2.0).min(beta))
}

/// Least-squares slope of `log2(error)` against `log2(resolution)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points, need at least 3", points.len())));
    }
    if let Some(p) = points.iter().find(|(r, e)| !(*r > 0.0 && *e > 0.0)) {
        return Err(Error::domain(format!("rate fit needs positive entries, got {p:?}")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all resolutions coincide".into()));
    }
    Ok(sxy / sxx)
}

struct Level {
    level: u32,
    resolution: f64,
    stepper: Stepper,
    restriction: Arc<CsrMatrix>,
}

/// Runs `n_paths` coupled paths and compares each coarse discretization with
/// the reference at `t = 1`.
///
/// For [`Axis::Space`] the entries of `coarse_levels` and `ref_level` are mesh
/// levels and every run takes `base.time_steps` steps. For [`Axis::Time`]
/// they are `log2` of the step counts and every run uses `base.space_level`.
pub fn convergence_study(
    base: &SchemeConfig,
    axis: Axis,
    coarse_levels: &[u32],
    ref_level: u32,
    n_paths: usize,
) -> Result<ConvergenceReport> {
    base.validate()?;
    if n_paths == 0 {
        return Err(Error::domain("a convergence study needs at least one path"));
    }
    if coarse_levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("coarse levels must be strictly increasing"));
    }
    if let Some(l) = coarse_levels.iter().find(|l| **l > ref_level) {
        return Err(Error::domain(format!("level {l} is finer than the reference level {ref_level}")));
    }
    let ref_config = match axis {
        Axis::Space => SchemeConfig { space_level: ref_level, ..base.clone() },
        Axis::Time => SchemeConfig { time_steps: steps_for(ref_level)?, ..base.clone() },
    };
    let ref_mesh = build_mesh(ref_config.dim, ref_config.space_level)?;
    let ref_ops = Arc::new(assemble(&ref_mesh)?);
    let reference = Stepper::with_operators(&ref_config, ref_mesh.clone(), ref_ops.clone())?;

    let levels = coarse_levels
        .par_iter()
        .map(|&l| build_level(base, axis, l, &ref_mesh, &ref_ops))
        .collect::<Result<Vec<_>>>()?;

    let fine_steps = ref_config.time_steps;
    let fine_level = ref_config.space_level;
    let seeds: Vec<u64> = (0..n_paths as u64).map(|p| path_seed(base.master_seed, p)).collect();
    let streams: Vec<(NoiseStream, ScalarDriver)> = seeds
        .iter()
        .map(|&s| Ok((NoiseStream::new(s, fine_level, fine_steps), sample_driver(s, base.n_modes)?)))
        .collect::<Result<_>>()?;

    let identity = CsrMatrix::identity(ref_ops.dim());
    let fine_chol: &BandedCholesky = &ref_ops.mass_chol;
    let references = streams
        .par_iter()
        .map(|(stream, driver)| {
            let noise = CoupledNoise { stream, fine_chol, restriction: &identity, coarse_level: fine_level };
            Ok(reference.evolve(&noise, driver, None)?.state.alpha)
        })
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> =
        (0..n_paths).flat_map(|p| (0..levels.len()).map(move |l| (p, l))).collect();
    let errors = tasks
        .par_iter()
        .map(|&(p, l)| {
            let lv = &levels[l];
            let (stream, driver) = &streams[p];
            let noise = CoupledNoise {
                stream,
                fine_chol,
                restriction: &lv.restriction,
                coarse_level: lv.stepper.config().space_level,
            };
            let alpha = lv.stepper.evolve(&noise, driver, None)?.state.alpha;
            relative_error(&alpha, &references[p], &lv.restriction, &ref_ops.mass)
        })
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<LevelResult> = levels
        .iter()
        .enumerate()
        .map(|(l, lv)| {
            let errs: Vec<f64> = (0..n_paths).map(|p| errors[p * levels.len() + l]).collect();
            let mean = errs.iter().sum::<f64>() / n_paths as f64;
            LevelResult {
                level: lv.level,
                resolution: lv.resolution,
                errors: errs,
                mean_error: mean,
                saturated: mean < SATURATION,
            }
        })
        .collect();

    let fit_points: Vec<(f64, f64)> =
        results.iter().filter(|r| !r.saturated).map(|r| (r.resolution, r.mean_error)).collect();
    let fitted_rate = if fit_points.len() >= 3 { Some(fit_rate(&fit_points)?) } else { None };
    let (space, time) = theoretical_rates(base.gamma, base.dim, DRIVER_HOLDER);
    Ok(ConvergenceReport {
        axis,
        dim: base.dim,
        gamma: base.gamma,
        levels: results,
        fitted_rate,
        theoretical_rate: if axis == Axis::Space { space } else { time },
        paths: n_paths,
        master_seed: base.master_seed,
        seeds,
    })
}

fn steps_for(level: u32) -> Result<usize> {
    1usize
        .checked_shl(level)
        .filter(|s| *s > 0 && level < usize::BITS - 1)
        .ok_or_else(|| Error::Capacity(format!("2^{level} time steps")))
}

fn build_level(
    base: &SchemeConfig,
    axis: Axis,
    level: u32,
    ref_mesh: &DyadicMesh,
    ref_ops: &Arc<FemOperators>,
) -> Result<Level> {
    match axis {
        Axis::Space => {
            let config = SchemeConfig { space_level: level, ..base.clone() };
            let mesh = build_mesh(config.dim, level)?;
            let restriction = Arc::new(restriction_matrix(&mesh, ref_mesh)?);
            let resolution = mesh.h();
            let ops = if level == ref_mesh.level() { ref_ops.clone() } else { Arc::new(assemble(&mesh)?) };
            let stepper = Stepper::with_operators(&config, mesh, ops)?;
            Ok(Level { level, resolution, stepper, restriction })
        }
        Axis::Time => {
            let steps = steps_for(level)?;
            let config = SchemeConfig { time_steps: steps, ..base.clone() };
            let stepper = Stepper::with_operators(&config, ref_mesh.clone(), ref_ops.clone())?;
            let restriction = Arc::new(CsrMatrix::identity(ref_ops.dim()));
            Ok(Level { level, resolution: 1.0 / steps as f64, stepper, restriction })
        }
    }
}

/// Ratio of the reference and coarse time grids, checked for divisibility.
pub fn check_coupling(fine_steps: usize, coarse_steps: usize) -> Result<usize> {
    if coarse_steps == 0 || fine_steps % coarse_steps != 0 {
        return Err(Error::domain(format!("{coarse_steps} steps do not divide {fine_steps}")));
    }
    Ok(fine_steps / coarse_steps)
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    axis: &'a str,
    gamma: f64,
    resolution: f64,
    path_seed: u64,
    error: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    axis: &'a str,
    dim: usize,
    gamma: f64,
    resolution: f64,
    mean_error: f64,
    saturated: bool,
    fitted_rate: Option<f64>,
    theoretical_rate: f64,
}

/// Per-path errors of several reports as CSV bytes.
pub fn errors_csv(reports: &[ConvergenceReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        for lv in &r.levels {
            for (seed, e) in r.seeds.iter().zip(&lv.errors) {
                w.serialize(ErrorRow {
                    axis: r.axis.as_str(),
                    gamma: r.gamma,
                    resolution: lv.resolution,
                    path_seed: *seed,
                    error: *e,
                })?;
            }
        }
    }
    finish(w)
}

/// Mean errors and rates of several reports as CSV bytes.
pub fn summary_csv(reports: &[ConvergenceReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        for lv in &r.levels {
            w.serialize(SummaryRow {
                axis: r.axis.as_str(),
                dim: r.dim,
                gamma: r.gamma,
                resolution: lv.resolution,
                mean_error: lv.mean_error,
                saturated: lv.saturated,
                fitted_rate: r.fitted_rate,
                theoretical_rate: r.theoretical_rate,
            })?;
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Log-log plot of the mean errors with dashed theoretical-rate lines.
pub fn report_svg(reports: &[ConvergenceReport]) -> String {
    let series = reports
        .iter()
        .map(|r| crate::plot::Series {
            label: format!("gamma = {}", r.gamma),
            points: r.levels.iter().filter(|l| !l.saturated).map(|l| (l.resolution, l.mean_error)).collect(),
            rate: Some(r.theoretical_rate),
        })
        .collect::<Vec<_>>();
    let xlabel = match reports.first().map(|r| r.axis) {
        Some(Axis::Time) => "dt",
        _ => "h",
    };
    crate::plot::loglog_svg(&series, xlabel, "relative error")
}

/// Gnuplot script plotting `summary.csv` from the same directory.
pub fn gnuplot_script(reports: &[ConvergenceReport]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset logscale xy\nset key left top\nset xlabel 'resolution'\nset ylabel 'relative error'\n",
    );
    let plots: Vec<String> = reports
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            let first = r.levels.iter().find(|l| !l.saturated);
            let anchor = first.map(|l| l.mean_error / l.resolution.powf(r.theoretical_rate)).unwrap_or(1.0);
            [
                format!(
                    "'summary.csv' every ::1 using ($3=={g} && $2=={d} ? $4 : 1/0):5 with linespoints lt {c} title 'gamma = {g}'",
                    g = r.gamma,
                    d = r.dim,
                    c = i + 1
                ),
                format!(
                    "{anchor:e}*x**{rate} with lines dt 2 lt {c} title 'rate {rate}'",
                    rate = r.theoretical_rate,
                    c = i + 1
                ),
            ]
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}

/// Writes `errors.csv`, `summary.csv`, `convergence.svg` and `convergence.gp`.
pub fn write_report_files(dir: &Path, reports: &[ConvergenceReport]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("errors.csv"), errors_csv(reports)?)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(reports)?)?;
    std::fs::write(dir.join("convergence.svg"), report_svg(reports))?;
    let mut gp = std::fs::File::create(dir.join("convergence.gp"))?;
    gp.write_all(gnuplot_script(reports).as_bytes())?;
    Ok(())
}
