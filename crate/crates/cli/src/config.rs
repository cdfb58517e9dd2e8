//! JSON run configuration. Every field has a default, so `{}` is a valid
//! file; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spdelab::harness::Axis;
use spdelab::mesh::build_mesh;
use spdelab::scheme::{check_gamma, InitialData, SchemeConfig, StepMode};
use spdelab::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: SchemeConfig,
    pub study: StudyConfig,
    pub verify: VerifyConfig,
    pub holder: HolderConfig,
    pub assemble: AssembleConfig,
    pub simulate: SimulateConfig,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub axis: Axis,
    pub gammas: Vec<f64>,
    /// Mesh levels (space axis) or `log2` step counts (time axis).
    pub coarse_levels: Vec<u32>,
    pub ref_level: u32,
    pub n_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub n_paths: usize,
    pub steps: usize,
    pub dim_q: usize,
    pub p_values: Vec<f64>,
    pub sum_lengths: Vec<usize>,
    pub holder_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderConfig {
    pub gamma: f64,
    pub space_level: u32,
    pub m_min: u32,
    pub m_max: u32,
    pub n_paths: usize,
    pub brownian_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleConfig {
    /// `(dim, level)` pairs to check.
    pub cases: Vec<(usize, u32)>,
    /// Perturbs one mass entry before checking; for exercising the failure path.
    pub inject_fault: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub path_index: u64,
    pub snapshot_level: Option<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeConfig {
                dim: 1,
                gamma: 0.75,
                k: 0.5,
                space_level: 9,
                time_steps: 1 << 14,
                mode: StepMode::FinalTime,
                initial: InitialData::Zero,
                master_seed: 1,
                n_modes: spdelab::driver::DEFAULT_MODES,
            },
            study: StudyConfig::default(),
            verify: VerifyConfig::default(),
            holder: HolderConfig::default(),
            assemble: AssembleConfig::default(),
            simulate: SimulateConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { axis: Axis::Space, gammas: vec![0.25, 0.75], coarse_levels: vec![2, 3, 4, 5, 6], ref_level: 9, n_paths: 4 }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            steps: 32,
            dim_q: 1,
            p_values: vec![1.0, 2.0, 4.0],
            sum_lengths: vec![1, 4, 16],
            holder_only: false,
        }
    }
}

impl Default for HolderConfig {
    fn default() -> Self {
        Self { gamma: 0.75, space_level: 7, m_min: 4, m_max: 12, n_paths: 4, brownian_seeds: 20 }
    }
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self { cases: vec![(1, 1), (1, 2), (1, 3), (2, 3)], inject_fault: false }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks the scheme, every study level against the mesh guards and
    /// every gamma against the admissibility condition.
    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        let s = &self.study;
        if s.gammas.is_empty() {
            return Err(Error::Domain("study.gammas is empty".into()));
        }
        for g in &s.gammas {
            check_gamma(*g, self.scheme.dim)?;
        }
        if s.n_paths == 0 {
            return Err(Error::Domain("study.n_paths must be positive".into()));
        }
        if s.coarse_levels.iter().any(|l| *l > s.ref_level) {
            return Err(Error::Domain("study.coarse_levels must not exceed study.ref_level".into()));
        }
        match s.axis {
            Axis::Space => {
                build_mesh(self.scheme.dim, s.ref_level)?;
            }
            Axis::Time => {
                if s.ref_level > 30 {
                    return Err(Error::Capacity(format!("2^{} time steps", s.ref_level)));
                }
            }
        }
        let h = &self.holder;
        check_gamma(h.gamma, 1)?;
        build_mesh(1, h.space_level)?;
        if h.m_max < h.m_min + 3 || h.m_max > 20 {
            return Err(Error::Domain("holder needs m_min + 3 <= m_max <= 20".into()));
        }
        let v = &self.verify;
        if v.steps == 0 || v.dim_q == 0 || v.n_paths == 0 {
            return Err(Error::Domain("verify.steps, verify.dim_q and verify.n_paths must be positive".into()));
        }
        for (dim, level) in &self.assemble.cases {
            build_mesh(*dim, *level)?;
        }
        Ok(())
    }
}
