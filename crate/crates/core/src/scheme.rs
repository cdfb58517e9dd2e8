//! Backward-Euler / P1 / sinc-quadrature time stepping.
//!
//! In nodal coefficients one step reads
//!
//! ```text
//! (M + Δt T) α^{n+1} = M α^n + b_n M Q_k^{-γ}(g_n)
//! ```
//!
//! where `g_n` is the projected Wiener increment (a load vector). For `γ = 0`
//! the noise term is `b_n g_n`.
//!
//! Because `K = M + T`, the operators `(M + Δt T)^{-1} M` and `Q_k^{-γ}(·) M`
//! are both functions of `M^{-1} T` and commute. The fast path therefore runs
//! the recursion on raw increments and colors the result once.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::ScalarDriver;
use crate::error::{Error, Result};
use crate::fem::{assemble, FemOperators};
use crate::linalg::{checked_solve, BandedCholesky, CsrMatrix};
use crate::mesh::{build_mesh, DyadicMesh};
use crate::quadrature::{make_spec, QuadratureSolver};
use crate::wiener::{CoupledNoise, ProjectedIncrement};

pub const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Color the noise in every step.
    PerStep,
    /// Color once at the output times.
    FinalTime,
}

/// Initial condition, interpolated at the mesh vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    Constant { value: f64 },
    /// `amplitude · Π_i cos(π m_i x_i)`.
    Cosine { amplitude: f64, modes: [u32; 2] },
}

impl InitialData {
    pub fn is_zero(&self) -> bool {
        match self {
            InitialData::Zero => true,
            InitialData::Constant { value } => *value == 0.0,
            InitialData::Cosine { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn nodal_values(&self, mesh: &DyadicMesh) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        mesh.vertices()
            .iter()
            .map(|p| match self {
                InitialData::Zero => 0.0,
                InitialData::Constant { value } => *value,
                InitialData::Cosine { amplitude, modes } => {
                    let mut v = *amplitude * (pi * modes[0] as f64 * p[0]).cos();
                    if mesh.dim() == 2 {
                        v *= (pi * modes[1] as f64 * p[1]).cos();
                    }
                    v
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dim: usize,
    pub gamma: f64,
    pub k: f64,
    pub space_level: u32,
    /// `N`, with `Δt = 1/N`.
    pub time_steps: usize,
    pub mode: StepMode,
    pub initial: InitialData,
    pub master_seed: u64,
    pub n_modes: usize,
}

impl SchemeConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.time_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma, self.dim)?;
        if !(self.k > 0.0) {
            return Err(Error::domain(format!("quadrature resolution k = {} must be positive", self.k)));
        }
        if self.time_steps == 0 {
            return Err(Error::domain("at least one time step is required"));
        }
        if self.n_modes == 0 {
            return Err(Error::domain("the driver needs at least one mode"));
        }
        build_mesh(self.dim, self.space_level).map(|_| ())
    }
}

/// `γ ∈ (d/4 - 1/2, 1] ∩ [0, 1]`.
pub fn check_gamma(gamma: f64, dim: usize) -> Result<()> {
    let lower = dim as f64 / 4.0 - 0.5;
    if !(0.0..=1.0).contains(&gamma) || gamma <= lower {
        return Err(Error::domain(format!(
            "gamma = {gamma} is not admissible in dimension {dim}: need gamma in ({lower}, 1] and [0, 1]"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub alpha: Vec<f64>,
    pub n: usize,
    pub t: f64,
}

/// States at `t = j 2^{-m}`, `j = 0..=2^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub m: u32,
    pub states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Evolved {
    pub state: PathState,
    pub trajectory: Option<Trajectory>,
}

/// Assembled operators and factorizations for one `(level, Δt, γ, k)`.
/// Read-only once built; one instance serves any number of paths.
pub struct Stepper {
    config: SchemeConfig,
    mesh: DyadicMesh,
    ops: Arc<FemOperators>,
    system: CsrMatrix,
    sys_factor: BandedCholesky,
    quad: QuadratureSolver,
}

impl Stepper {
    pub fn new(config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        let mesh = build_mesh(config.dim, config.space_level)?;
        let ops = Arc::new(assemble(&mesh)?);
        Self::with_operators(config, mesh, ops)
    }

    /// Reuses already assembled operators of `mesh`.
    pub fn with_operators(config: &SchemeConfig, mesh: DyadicMesh, ops: Arc<FemOperators>) -> Result<Self> {
        config.validate()?;
        if mesh.num_vertices() != ops.dim() || mesh.level() != config.space_level {
            return Err(Error::domain("operators do not belong to the configured mesh"));
        }
        let system = ops.system_matrix(config.dt());
        let sys_factor = BandedCholesky::factor(&system)?;
        let quad = QuadratureSolver::new(make_spec(config.gamma, config.k)?, &ops)?;
        Ok(Self { config: config.clone(), mesh, ops, system, sys_factor, quad })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn mesh(&self) -> &DyadicMesh {
        &self.mesh
    }

    pub fn operators(&self) -> &FemOperators {
        &self.ops
    }

    pub fn quadrature(&self) -> &QuadratureSolver {
        &self.quad
    }

    pub fn initial_state(&self) -> PathState {
        PathState { alpha: self.config.initial.nodal_values(&self.mesh), n: 0, t: 0.0 }
    }

    fn solve_system(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        checked_solve(&self.system, &self.sys_factor, rhs, SOLVE_TOLERANCE)
    }

    /// One backward-Euler step with amplitude `b_n` and increment `g_n`.
    pub fn step(&self, state: &PathState, b_n: f64, g_n: &ProjectedIncrement) -> Result<PathState> {
        let dofs = self.ops.dim();
        if state.alpha.len() != dofs || g_n.values.len() != dofs {
            return Err(Error::domain(format!(
                "state/increment sizes ({}, {}) do not match {dofs} dofs",
                state.alpha.len(),
                g_n.values.len()
            )));
        }
        let mut rhs = self.ops.mass.matvec(&state.alpha);
        if self.config.gamma == 0.0 {
            crate::linalg::axpy(b_n, &g_n.values, &mut rhs);
        } else {
            let colored = self.ops.mass.matvec(&self.quad.apply(&g_n.values)?);
            crate::linalg::axpy(b_n, &colored, &mut rhs);
        }
        let alpha = self.solve_system(&rhs)?;
        let n = state.n + 1;
        Ok(PathState { alpha, n, t: n as f64 * self.config.dt() })
    }

    /// Runs the scheme to `t = 1` with noise drawn from `noise`, sampling
    /// `b` at the left end of every step. With `snapshot_level = Some(m)`
    /// the states at `t = j 2^{-m}` are recorded as well.
    pub fn evolve(
        &self,
        noise: &CoupledNoise<'_>,
        driver: &ScalarDriver,
        snapshot_level: Option<u32>,
    ) -> Result<Evolved> {
        let steps = self.config.time_steps;
        let source = |n: usize| noise.increment(n, steps);
        match self.config.mode {
            StepMode::PerStep => self.evolve_with(source, driver, snapshot_level),
            StepMode::FinalTime => self.evolve_fast_with(source, driver, snapshot_level),
        }
    }

    /// Per-step coloring regardless of the configured mode.
    pub fn evolve_per_step(
        &self,
        noise: &CoupledNoise<'_>,
        driver: &ScalarDriver,
        snapshot_level: Option<u32>,
    ) -> Result<Evolved> {
        let steps = self.config.time_steps;
        self.evolve_with(|n| noise.increment(n, steps), driver, snapshot_level)
    }

    /// Colors the noise once per output time regardless of the configured mode.
    pub fn evolve_fast(
        &self,
        noise: &CoupledNoise<'_>,
        driver: &ScalarDriver,
        snapshot_level: Option<u32>,
    ) -> Result<Evolved> {
        let steps = self.config.time_steps;
        self.evolve_fast_with(|n| noise.increment(n, steps), driver, snapshot_level)
    }

    fn snapshot_stride(&self, snapshot_level: Option<u32>) -> Result<Option<(u32, usize)>> {
        let Some(m) = snapshot_level else { return Ok(None) };
        let count = 1usize.checked_shl(m).unwrap_or(0);
        if count == 0 || self.config.time_steps % count != 0 {
            return Err(Error::domain(format!(
                "snapshots at 2^-{m} need a step count divisible by 2^{m}"
            )));
        }
        Ok(Some((m, self.config.time_steps / count)))
    }

    /// Per-step scheme with an arbitrary increment source.
    pub fn evolve_with<F>(&self, mut source: F, driver: &ScalarDriver, snapshot_level: Option<u32>) -> Result<Evolved>
    where
        F: FnMut(usize) -> Result<ProjectedIncrement>,
    {
        let stride = self.snapshot_stride(snapshot_level)?;
        let b = driver.b_on_grid(self.config.time_steps)?;
        let mut state = self.initial_state();
        let mut snaps = stride.map(|_| vec![state.alpha.clone()]);
        for (n, b_n) in b.iter().enumerate() {
            let g = source(n)?;
            state = self.step(&state, *b_n, &g)?;
            if let (Some((_, every)), Some(s)) = (stride, snaps.as_mut()) {
                if state.n % every == 0 {
                    s.push(state.alpha.clone());
                }
            }
        }
        Ok(Evolved {
            state,
            trajectory: stride.zip(snaps).map(|((m, _), states)| Trajectory { m, states }),
        })
    }

    /// Commuting fast path with an arbitrary increment source.
    pub fn evolve_fast_with<F>(
        &self,
        mut source: F,
        driver: &ScalarDriver,
        snapshot_level: Option<u32>,
    ) -> Result<Evolved>
    where
        F: FnMut(usize) -> Result<ProjectedIncrement>,
    {
        let stride = self.snapshot_stride(snapshot_level)?;
        let dofs = self.ops.dim();
        let b = driver.b_on_grid(self.config.time_steps)?;
        let mut homogeneous = self.initial_state().alpha;
        let track_initial = !self.config.initial.is_zero();
        let mut raw = vec![0.0; dofs];
        let mut snaps = Vec::new();
        if stride.is_some() {
            snaps.push(homogeneous.clone());
        }
        for (n, b_n) in b.iter().enumerate() {
            let g = source(n)?;
            if g.values.len() != dofs {
                return Err(Error::domain("increment size does not match the mesh"));
            }
            let mut rhs = self.ops.mass.matvec(&raw);
            crate::linalg::axpy(*b_n, &g.values, &mut rhs);
            raw = self.solve_system(&rhs)?;
            if track_initial {
                homogeneous = self.solve_system(&self.ops.mass.matvec(&homogeneous))?;
            }
            if let Some((_, every)) = stride {
                if (n + 1) % every == 0 {
                    snaps.push(self.color(&raw, &homogeneous)?);
                }
            }
        }
        let alpha = match (stride, snaps.last()) {
            (Some(_), Some(last)) => last.clone(),
            _ => self.color(&raw, &homogeneous)?,
        };
        let steps = self.config.time_steps;
        Ok(Evolved {
            state: PathState { alpha, n: steps, t: 1.0 },
            trajectory: stride.map(|(m, _)| Trajectory { m, states: snaps }),
        })
    }

    /// `homogeneous + Q(M raw)`; the identity on `raw` when `γ = 0`.
    fn color(&self, raw: &[f64], homogeneous: &[f64]) -> Result<Vec<f64>> {
        let mut out = if self.config.gamma == 0.0 {
            raw.to_vec()
        } else {
            self.quad.apply(&self.ops.mass.matvec(raw))?
        };
        crate::linalg::axpy(1.0, homogeneous, &mut out);
        Ok(out)
    }
}

/// One nodal value per line with 17 significant digits.
pub fn format_state(alpha: &[f64]) -> String {
    let mut s = String::with_capacity(alpha.len() * 24);
    for v in alpha {
        s.push_str(&format!("{v:.16e}\n"));
    }
    s
}

/// Inverse of [`format_state`].
pub fn parse_state(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse().map_err(|_| Error::domain(format!("bad state entry {l:?}"))))
        .collect()
}

/// Path `index` of the configuration on its own grid, with the noise and
/// driver keyed by `path_seed(master_seed, index)`.
pub fn simulate_path(config: &SchemeConfig, index: u64, snapshot_level: Option<u32>) -> Result<Evolved> {
    let stepper = Stepper::new(config)?;
    let seed = crate::rng::path_seed(config.master_seed, index);
    let stream = crate::wiener::NoiseStream::new(seed, config.space_level, config.time_steps);
    let driver = crate::driver::sample_driver(seed, config.n_modes)?;
    let identity = CsrMatrix::identity(stepper.operators().dim());
    let noise = CoupledNoise {
        stream: &stream,
        fine_chol: &stepper.operators().mass_chol,
        restriction: &identity,
        coarse_level: config.space_level,
    };
    stepper.evolve(&noise, &driver, snapshot_level)
}
