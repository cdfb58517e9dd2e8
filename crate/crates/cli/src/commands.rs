use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use spdelab::fem::{assemble, FemOperators};
use spdelab::harness::{convergence_study, write_report_files, ConvergenceReport};
use spdelab::l0::{
    bdg_ratio, bdg_sum_ratio, brownian_path, dp_metric, holder_exponent, isometry_moments, ElementaryIntegrand,
    IntegrandFamily, MIN_BDG_PATHS,
};
use spdelab::linalg::m_norm;
use spdelab::mesh::{build_mesh, restriction_matrix, DyadicMesh};
use spdelab::rng::{path_seed, KeyedNormals, StreamTag};
use spdelab::scheme::{format_state, simulate_path, SchemeConfig};
use spdelab::{Error, Result};

use crate::config::RunConfig;

/// Outcome of a command that did not hit an error.
pub enum Status {
    Ok,
    /// One or more checks failed.
    Failed,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn manifest(command: &str, cfg: &RunConfig, extra: serde_json::Value, seconds: f64) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "master_seed": cfg.scheme.master_seed,
        "results": extra,
        "wall_seconds": seconds,
    })
}

// ---------------------------------------------------------------- assemble

#[derive(Serialize)]
struct AssembleCase {
    dim: usize,
    level: u32,
    max_mass_diff: f64,
    max_stiffness_diff: f64,
    max_a2_diff: f64,
    stiffness_kernel: f64,
    total_measure_diff: f64,
    restriction_column_sum: f64,
    worst_entry: Option<(String, usize, usize, f64, f64)>,
    pass: bool,
}

/// Dense mass and stiffness computed per edge from the geometry:
/// mass `|T|/6` on the diagonal and `|T|/12` off it, stiffness from the
/// cotangents of the angles opposite each edge (lengths `1/h`-scaled in 1D).
fn oracle_matrices(mesh: &DyadicMesh) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = mesh.num_vertices();
    let mut m = vec![vec![0.0; n]; n];
    let mut t = vec![vec![0.0; n]; n];
    let v = mesh.vertices();
    for cell in mesh.cells() {
        if mesh.dim() == 1 {
            let (a, b) = (cell[0], cell[1]);
            let h = (v[b][0] - v[a][0]).abs();
            m[a][a] += h / 3.0;
            m[b][b] += h / 3.0;
            m[a][b] += h / 6.0;
            m[b][a] += h / 6.0;
            t[a][a] += 1.0 / h;
            t[b][b] += 1.0 / h;
            t[a][b] -= 1.0 / h;
            t[b][a] -= 1.0 / h;
            continue;
        }
        let p = |i: usize| v[cell[i]];
        let area = 0.5 * ((p(1)[0] - p(0)[0]) * (p(2)[1] - p(0)[1]) - (p(2)[0] - p(0)[0]) * (p(1)[1] - p(0)[1])).abs();
        for i in 0..3 {
            let (a, b, c) = (cell[i], cell[(i + 1) % 3], cell[(i + 2) % 3]);
            m[a][a] += area / 6.0;
            m[a][b] += area / 12.0;
            m[b][a] += area / 12.0;
            // angle at c, opposite the edge ab
            let u = [v[a][0] - v[c][0], v[a][1] - v[c][1]];
            let w = [v[b][0] - v[c][0], v[b][1] - v[c][1]];
            let cot = (u[0] * w[0] + u[1] * w[1]) / (u[0] * w[1] - u[1] * w[0]).abs();
            t[a][b] -= 0.5 * cot;
            t[b][a] -= 0.5 * cot;
            t[a][a] += 0.5 * cot;
            t[b][b] += 0.5 * cot;
        }
    }
    (m, t)
}

fn check_case(dim: usize, level: u32, inject_fault: bool) -> Result<AssembleCase> {
    let mesh = build_mesh(dim, level)?;
    let mut ops: FemOperators = assemble(&mesh)?;
    if inject_fault {
        ops.mass.values_mut()[0] += 1e-6;
    }
    let (om, ot) = oracle_matrices(&mesh);
    let n = mesh.num_vertices();
    let mut worst: Option<(String, usize, usize, f64, f64)> = None;
    let mut diffs = [0.0f64; 3];
    for i in 0..n {
        for j in 0..n {
            let cases = [
                ("mass", ops.mass.get(i, j), om[i][j]),
                ("stiffness", ops.stiffness.get(i, j), ot[i][j]),
                ("a2", ops.a2.get(i, j), om[i][j] + ot[i][j]),
            ];
            for (k, (name, got, want)) in cases.into_iter().enumerate() {
                let d = (got - want).abs();
                if d > diffs[k] {
                    diffs[k] = d;
                    if worst.as_ref().is_none_or(|w| (w.3 - w.4).abs() < d) {
                        worst = Some((name.to_string(), i, j, got, want));
                    }
                }
            }
        }
    }
    let ones = vec![1.0; n];
    let kernel = ops.stiffness.matvec(&ones).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let measure = spdelab::linalg::dot(&ones, &ops.mass.matvec(&ones));
    let column_sum = if level > 0 {
        let a = restriction_matrix(&build_mesh(dim, level - 1)?, &mesh)?;
        a.transpose_matvec(&vec![1.0; a.nrows()]).iter().fold(0.0f64, |m, s| m.max((s - 1.0).abs()))
    } else {
        0.0
    };
    let pass = diffs.iter().all(|d| *d <= 1e-12) && kernel <= 1e-10 && (measure - 1.0).abs() <= 1e-12 && column_sum <= 1e-14;
    Ok(AssembleCase {
        dim,
        level,
        max_mass_diff: diffs[0],
        max_stiffness_diff: diffs[1],
        max_a2_diff: diffs[2],
        stiffness_kernel: kernel,
        total_measure_diff: (measure - 1.0).abs(),
        restriction_column_sum: column_sum,
        worst_entry: if pass { None } else { worst },
        pass,
    })
}

pub fn assemble_check(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let start = Instant::now();
    let mut cases = Vec::new();
    for (dim, level) in &cfg.assemble.cases {
        let c = check_case(*dim, *level, cfg.assemble.inject_fault)?;
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} dim {} level {}: mass {:.1e}, stiffness {:.1e}, a2 {:.1e}, |T1| {:.1e}",
            c.dim, c.level, c.max_mass_diff, c.max_stiffness_diff, c.max_a2_diff, c.stiffness_kernel
        );
        if let Some((name, i, j, got, want)) = &c.worst_entry {
            println!("  {name}[{i},{j}] = {got:.17e}, expected {want:.17e}, diff {:.3e}", got - want);
        }
        cases.push(c);
    }
    std::fs::create_dir_all(out)?;
    let pass = cases.iter().all(|c| c.pass);
    write_json(
        &out.join("assemble_check.json"),
        &manifest("assemble-check", cfg, json!({ "cases": cases, "pass": pass }), start.elapsed().as_secs_f64()),
    )?;
    Ok(if pass { Status::Ok } else { Status::Failed })
}

// ------------------------------------------------------------- convergence

pub fn convergence(cfg: &RunConfig, out: &Path) -> Result<Status> {
    std::fs::create_dir_all(out)?;
    let s = &cfg.study;
    let mut reports: Vec<ConvergenceReport> = Vec::new();
    let mut timings = Vec::new();
    for &gamma in &s.gammas {
        let base = SchemeConfig { gamma, ..cfg.scheme.clone() };
        let start = Instant::now();
        let result = convergence_study(&base, s.axis, &s.coarse_levels, s.ref_level, s.n_paths);
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(r) => {
                println!(
                    "{} gamma {gamma}: fitted rate {} (theoretical {}) [{seconds:.1}s]",
                    s.axis.as_str(),
                    r.fitted_rate.map_or("n/a".to_string(), |v| format!("{v:.3}")),
                    r.theoretical_rate
                );
                reports.push(r);
                timings.push(json!({ "gamma": gamma, "seconds": seconds }));
            }
            Err(e) => {
                if !reports.is_empty() {
                    write_report_files(out, &reports)?;
                }
                return Err(e);
            }
        }
    }
    write_report_files(out, &reports)?;
    let results = json!({
        "reports": reports.iter().map(|r| json!({
            "gamma": r.gamma,
            "fitted_rate": r.fitted_rate,
            "theoretical_rate": r.theoretical_rate,
            "seeds": r.seeds,
        })).collect::<Vec<_>>(),
        "timings": timings,
    });
    let total = timings_total(&results);
    write_json(&out.join("manifest.json"), &manifest("convergence", cfg, results, total))?;
    Ok(Status::Ok)
}

fn timings_total(results: &serde_json::Value) -> f64 {
    results["timings"].as_array().map_or(0.0, |a| a.iter().filter_map(|t| t["seconds"].as_f64()).sum())
}

// ------------------------------------------------------------------ verify

#[derive(Serialize)]
struct Check {
    name: String,
    value: f64,
    lower: f64,
    upper: f64,
    status: &'static str,
}

struct Suite {
    checks: Vec<Check>,
    reduced: bool,
}

impl Suite {
    fn record(&mut self, name: impl Into<String>, value: f64, lower: f64, upper: f64) {
        let status = if self.reduced {
            "suppressed"
        } else if (lower..=upper).contains(&value) {
            "pass"
        } else {
            "fail"
        };
        let name = name.into();
        println!("{:<10} {name}: {value:.4} in [{lower}, {upper}]", status.to_uppercase());
        self.checks.push(Check { name, value, lower, upper, status });
    }

    fn info(&mut self, name: impl Into<String>, value: f64, lower: f64, upper: f64) {
        let name = name.into();
        println!("{:<10} {name}: {value:.4} (reference band [{lower}, {upper}])", "INFO");
        self.checks.push(Check { name, value, lower, upper, status: "info" });
    }

    fn csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn holder_suite(cfg: &RunConfig, suite: &mut Suite, out: &Path) -> Result<()> {
    let h = &cfg.holder;
    let rows = spde_holder(cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    std::fs::write(out.join("holder.csv"), w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    let exps: Vec<f64> = rows.iter().filter(|r| r.m == h.m_max).filter_map(|r| r.exponent).collect();
    if exps.len() < rows.iter().filter(|r| r.m == h.m_max).count() || exps.is_empty() {
        return Err(Error::InsufficientData("degenerate SPDE trajectory in the Hölder estimate".into()));
    }
    let mean = exps.iter().sum::<f64>() / exps.len() as f64;
    suite.record(format!("holder exponent, SPDE d=1 gamma={}", h.gamma), mean, 0.35, 0.60);
    let brownian: Vec<f64> = (0..h.brownian_seeds as u64)
        .map(|s| {
            let w = brownian_path(path_seed(cfg.scheme.master_seed, s), h.m_max);
            holder_exponent(&w, h.m_min, h.m_max, |a, b| (a - b).abs()).map(|e| e.exponent.unwrap_or(f64::NAN))
        })
        .collect::<Result<_>>()?;
    let bm = brownian.iter().sum::<f64>() / brownian.len().max(1) as f64;
    suite.info("holder exponent, Brownian control", bm, 0.40, 0.55);
    Ok(())
}

#[derive(Serialize)]
struct HolderRow {
    path: u64,
    path_seed: u64,
    m: u32,
    max_increment: f64,
    exponent: Option<f64>,
}

fn spde_holder(cfg: &RunConfig) -> Result<Vec<HolderRow>> {
    let h = &cfg.holder;
    let scheme = SchemeConfig {
        dim: 1,
        gamma: h.gamma,
        space_level: h.space_level,
        time_steps: 1 << h.m_max,
        ..cfg.scheme.clone()
    };
    let mesh = build_mesh(1, h.space_level)?;
    let ops = assemble(&mesh)?;
    let mut rows = Vec::new();
    for p in 0..h.n_paths as u64 {
        let traj = simulate_path(&scheme, p, Some(h.m_max))?
            .trajectory
            .ok_or_else(|| Error::Numerical("missing trajectory".into()))?;
        let dist = |a: &Vec<f64>, b: &Vec<f64>| {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            m_norm(&ops.mass, &d)
        };
        let est = holder_exponent(&traj.states, h.m_min, h.m_max, dist)?;
        for (m, s) in &est.levels {
            rows.push(HolderRow {
                path: p,
                path_seed: path_seed(scheme.master_seed, p),
                m: *m,
                max_increment: *s,
                exponent: est.exponent,
            });
        }
    }
    Ok(rows)
}

pub fn holder(cfg: &RunConfig, out: &Path) -> Result<Status> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let mut suite = Suite { checks: Vec::new(), reduced: false };
    holder_suite(cfg, &mut suite, out)?;
    finish_suite("holder", cfg, suite, out, start)
}

fn finish_suite(command: &str, cfg: &RunConfig, suite: Suite, out: &Path, start: Instant) -> Result<Status> {
    std::fs::write(out.join(format!("{command}_checks.csv")), suite.csv()?)?;
    let failed = suite.checks.iter().any(|c| c.status == "fail");
    write_json(
        &out.join(format!("{command}_manifest.json")),
        &manifest(command, cfg, json!({ "checks": suite.checks, "reduced": suite.reduced }), start.elapsed().as_secs_f64()),
    )?;
    Ok(if failed { Status::Failed } else { Status::Ok })
}

pub fn verify(cfg: &RunConfig, out: &Path) -> Result<Status> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let v = &cfg.verify;
    let reduced = v.n_paths < MIN_BDG_PATHS;
    if reduced {
        eprintln!(
            "warning: {} paths give too little statistical power; pass/fail is suppressed and the BDG ratios need at least {MIN_BDG_PATHS} paths",
            v.n_paths
        );
    }
    let mut suite = Suite { checks: Vec::new(), reduced };
    if v.holder_only {
        holder_suite(cfg, &mut suite, out)?;
        return finish_suite("verify", cfg, suite, out, start);
    }
    let seed = cfg.scheme.master_seed;
    let mut alarms = String::new();

    // d_p triangle inequality on random triples.
    let g = KeyedNormals::new(seed, StreamTag::Integrand);
    let mut worst: f64 = f64::NEG_INFINITY;
    for trial in 0..200u64 {
        let z = g.draws(1_000_000 + trial, 3 * 64);
        let (x, rest) = z.split_at(64);
        let (y, w) = rest.split_at(64);
        for p in [1.0, 2.0] {
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).collect::<Vec<_>>();
            let xz = dp_metric(&d(x, w), p)?;
            let xy = dp_metric(&d(x, y), p)?;
            let yz = dp_metric(&d(y, w), p)?;
            worst = worst.max(xz - xy - yz);
        }
    }
    suite.record("dp triangle excess", worst, f64::NEG_INFINITY, 1e-12);

    // Convergence in probability of n^{-1}|Z|.
    let z = g.draws(2_000_000, 10_000.min(v.n_paths.max(100)));
    let dps: Vec<f64> = [1.0, 10.0, 100.0]
        .iter()
        .map(|n| dp_metric(&z.iter().map(|x| x.abs() / n).collect::<Vec<_>>(), 1.0))
        .collect::<Result<_>>()?;
    let monotone = dps.windows(2).all(|w| w[1] < w[0]);
    suite.record("dp decreasing for n^-1|Z|, n = 1, 10, 100", if monotone { 1.0 } else { 0.0 }, 1.0, 1.0);

    // Itô isometry.
    let unit = ElementaryIntegrand::new(1, 1, IntegrandFamily::DeterministicConst { c: 1.0 })?;
    let (second, _) = isometry_moments(&unit, v.n_paths, seed)?;
    suite.record("isometry E|I(1)|^2 / 1", second, 0.97, 1.03);

    let families = [
        ("deterministic", IntegrandFamily::DeterministicConst { c: 1.0 }),
        ("wiener_functional", IntegrandFamily::WienerFunctional),
        ("heavy_tailed", IntegrandFamily::HeavyTailedScale),
    ];
    let mut bdg_rows = Vec::new();
    if !reduced {
        for (name, family) in &families {
            let phi = ElementaryIntegrand::new(v.dim_q, v.steps, family.clone())?;
            for &p in &v.p_values {
                let a = alarm_guard(bdg_ratio(&phi, p, v.n_paths, seed), &mut alarms, name, p)?;
                let b = alarm_guard(bdg_ratio(&phi, p, v.n_paths, seed.wrapping_add(1)), &mut alarms, name, p)?;
                bdg_rows.push(json!({ "family": name, "p": p, "ratio": a.ratio, "ratio_other_seed": b.ratio, "lhs": a.lhs, "rhs": a.rhs }));
                let finite = a.ratio.is_finite() && b.ratio.is_finite();
                suite.record(
                    format!("bdg {name} p={p} cross-seed ratio"),
                    if finite { a.ratio / b.ratio } else { f64::NAN },
                    0.9,
                    1.1,
                );
            }
        }
        let phi = ElementaryIntegrand::new(v.dim_q, v.steps, IntegrandFamily::DeterministicConst { c: 1.0 })?;
        let p = v.p_values.iter().copied().filter(|p| *p >= 2.0).fold(2.0, f64::max);
        let ratios: Vec<f64> = v
            .sum_lengths
            .iter()
            .map(|&m| {
                let phis = vec![phi.clone(); m];
                alarm_guard(bdg_sum_ratio(&phis, p, v.n_paths, seed), &mut alarms, "sum", p).map(|r| r.ratio)
            })
            .collect::<Result<_>>()?;
        for (m, r) in v.sum_lengths.iter().zip(&ratios) {
            bdg_rows.push(json!({ "family": "sum_deterministic", "p": p, "m": m, "ratio": r }));
        }
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
        suite.record(format!("bdg sum ratio spread over m = {:?}", v.sum_lengths), hi / lo, 1.0, 2.0);
    }
    write_json(&out.join("bdg.json"), &bdg_rows)?;
    if !alarms.is_empty() {
        std::fs::write(out.join("alarms.log"), &alarms)?;
    }
    holder_suite(cfg, &mut suite, out)?;
    finish_suite("verify", cfg, suite, out, start)
}

fn alarm_guard<T>(r: Result<T>, log: &mut String, name: &str, p: f64) -> Result<T> {
    if let Err(Error::StatisticalAlarm(msg)) = &r {
        let _ = writeln!(log, "{name} p={p}: {msg}");
    }
    r
}

// ---------------------------------------------------------------- simulate

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Status> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let sim = &cfg.simulate;
    let evolved = simulate_path(&cfg.scheme, sim.path_index, sim.snapshot_level)?;
    std::fs::write(out.join("state.txt"), format_state(&evolved.state.alpha))?;
    let mut snapshots = 0;
    if let Some(traj) = &evolved.trajectory {
        let dir = out.join("snapshots");
        std::fs::create_dir_all(&dir)?;
        for (j, s) in traj.states.iter().enumerate() {
            std::fs::write(dir.join(format!("t{j:06}.txt")), format_state(s))?;
        }
        snapshots = traj.states.len();
    }
    let mesh = build_mesh(cfg.scheme.dim, cfg.scheme.space_level)?;
    let results = json!({
        "path_index": sim.path_index,
        "path_seed": path_seed(cfg.scheme.master_seed, sim.path_index),
        "mesh": mesh.summary(),
        "snapshots": snapshots,
    });
    write_json(&out.join("manifest.json"), &manifest("simulate", cfg, results, start.elapsed().as_secs_f64()))?;
    println!("wrote {} nodal values to {}", evolved.state.alpha.len(), out.join("state.txt").display());
    Ok(Status::Ok)
}
