//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::microsim::{BoundaryRates, ScalingScheme};
use crate::profiles::{ProfilePair, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Example {
        gamma: f64,
        rho0: f64,
        rho1: f64,
    },
    Constant {
        potential: f64,
        density: f64,
    },
    /// Two-column `x value` files.
    Table {
        potential: PathBuf,
        density: PathBuf,
    },
}

impl ProfileSpec {
    pub fn build(&self) -> Result<ProfilePair> {
        match self {
            ProfileSpec::Example { gamma, rho0, rho1 } => ProfilePair::example(*gamma, *rho0, *rho1),
            ProfileSpec::Constant { potential, density } => ProfilePair::constant(*potential, *density),
            ProfileSpec::Table { potential, density } => {
                ProfilePair::tabulated(Table::from_file(potential)?, Table::from_file(density)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    Constant {
        value: f64,
    },
    Step {
        left: f64,
        right: f64,
        at: f64,
    },
    Linear {
        left: f64,
        right: f64,
    },
    /// Start from the reservoir density `ρ`.
    Density,
}

impl InitialProfile {
    pub fn eval(&self, profile: &ProfilePair, x: f64) -> f64 {
        match *self {
            InitialProfile::Constant { value } => value,
            InitialProfile::Step { left, right, at } => {
                if x < at {
                    left
                } else {
                    right
                }
            }
            InitialProfile::Linear { left, right } => left + (right - left) * x,
            InitialProfile::Density => profile.density(x),
        }
    }

    fn validate(&self) -> Result<()> {
        let values: Vec<f64> = match *self {
            InitialProfile::Constant { value } => vec![value],
            InitialProfile::Step { left, right, .. } | InitialProfile::Linear { left, right } => {
                vec![left, right]
            }
            InitialProfile::Density => Vec::new(),
        };
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("initial densities must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Thresholds of the verdicts; every entry can be overridden from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Largest allowed ratio of the last to the first L¹ distance in a sweep.
    pub l1_ratio: f64,
    /// Boundary block gap at the finest scale must be below this times `t`.
    pub boundary_fraction: f64,
    /// Largest allowed ratio of rate-insensitivity gaps, largest over smallest N.
    pub insensitivity_ratio: f64,
    pub oracle_z: f64,
    /// One-block residual may exceed the fitted envelope by this factor.
    pub one_block_factor: f64,
    /// Entropy residual tolerance is this times `dx + δ`.
    pub entropy_factor: f64,
    pub energy_ratio_low: f64,
    pub energy_ratio_high: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            l1_ratio: 0.5,
            boundary_fraction: 0.03,
            insensitivity_ratio: 0.5,
            oracle_z: 4.0,
            one_block_factor: 1.5,
            entropy_factor: 5.0,
            energy_ratio_low: 0.8,
            energy_ratio_high: 1.25,
        }
    }
}

/// Small-system validation against the exact law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleSettings {
    pub n_list: Vec<usize>,
    pub p_list: Vec<f64>,
    pub times: Vec<f64>,
    pub ensemble: usize,
    pub initial: InitialProfile,
    pub tail: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            n_list: vec![2, 3, 4, 5, 6],
            p_list: vec![1.0, 0.75],
            times: vec![0.1, 0.5],
            ensemble: 10_000,
            initial: InitialProfile::Step {
                left: 0.9,
                right: 0.1,
                at: 0.5,
            },
            tail: crate::oracle::DEFAULT_TAIL,
        }
    }
}

/// Solver diagnostics: entropy inequality and energy functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticSettings {
    pub cells: Vec<usize>,
    pub entropies: usize,
    pub test_functions: usize,
    pub smoothing: f64,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        Self {
            cells: vec![256, 512, 1024],
            entropies: 20,
            test_functions: 10,
            smoothing: crate::pde_solver::DEFAULT_SMOOTHING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub profile: ProfileSpec,
    pub p: f64,
    pub n_list: Vec<usize>,
    pub sigma_exponent: f64,
    pub k_exponent: f64,
    /// `[in_left, out_left, in_right, out_right]`.
    pub boundary_rates: [f64; 4],
    /// Second reservoir setting for the rate-insensitivity comparison.
    pub alt_boundary_rates: [f64; 4],
    /// Lattice sizes of the rate-insensitivity comparison; all of `n_list` when empty.
    pub insensitivity_n: Vec<usize>,
    pub initial: InitialProfile,
    pub t_end: f64,
    pub obs_times: Vec<f64>,
    /// Spacing of the dense snapshot grid used for time integrals.
    pub snapshot_spacing: f64,
    pub ensemble: usize,
    /// Cells of the fine reference solve.
    pub pde_cells: usize,
    pub cfl: f64,
    /// Cells of the common grid on which mean fields are compared; the
    /// grid spans the band of the smallest N.
    pub comparison_cells: usize,
    pub y_grid: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub tolerances: Tolerances,
    pub oracle: OracleSettings,
    pub diagnostics: DiagnosticSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            profile: ProfileSpec::Example {
                gamma: 1.0,
                rho0: 0.2,
                rho1: 0.8,
            },
            p: 1.0,
            n_list: vec![256, 512, 1024, 2048],
            sigma_exponent: crate::microsim::DEFAULT_SIGMA_EXPONENT,
            k_exponent: crate::microsim::DEFAULT_K_EXPONENT,
            boundary_rates: [0.5; 4],
            alt_boundary_rates: [5.0, 0.1, 0.1, 5.0],
            insensitivity_n: Vec::new(),
            initial: InitialProfile::Constant { value: 0.5 },
            t_end: 0.5,
            obs_times: vec![0.1, 0.25, 0.5],
            snapshot_spacing: 1e-3,
            ensemble: 50,
            pde_cells: 8192,
            cfl: crate::pde_solver::DEFAULT_CFL,
            comparison_cells: 64,
            y_grid: vec![0.1, 0.05, 0.025],
            seed: 20_240_601,
            output_dir: PathBuf::from("hydrolimit-out"),
            tolerances: Tolerances::default(),
            oracle: OracleSettings::default(),
            diagnostics: DiagnosticSettings::default(),
        }
    }
}

/// Stream tags keep the random streams of different experiments apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sweep = 1,
    Oracle = 2,
    Diagnostics = 3,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.build()?;
        self.initial.validate()?;
        if !(self.t_end > 0.0) {
            return Err(invalid("t_end must be positive"));
        }
        if self.obs_times.is_empty()
            || self.obs_times.iter().any(|&t| !(t > 0.0 && t <= self.t_end))
            || self.obs_times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("obs_times must be increasing and lie in (0, t_end]"));
        }
        if !(self.snapshot_spacing > 0.0) {
            return Err(invalid("snapshot_spacing must be positive"));
        }
        if self.ensemble == 0 {
            return Err(invalid("ensemble size must be positive"));
        }
        if self.y_grid.iter().any(|&y| !(y > 0.0 && y < 0.5)) {
            return Err(invalid("block scales y must lie in (0, 1/2)"));
        }
        if self.comparison_cells == 0 {
            return Err(invalid("comparison grid needs at least one cell"));
        }
        let max_n = self.n_list.iter().copied().max().unwrap_or(0);
        if self.pde_cells < 4 * max_n {
            return Err(invalid(format!(
                "reference grid of {} cells is coarser than 4 x max N = {}",
                self.pde_cells,
                4 * max_n
            )));
        }
        if self.insensitivity_n.iter().any(|n| !self.n_list.contains(n)) {
            return Err(invalid("insensitivity_n must be a subset of n_list"));
        }
        Ok(())
    }

    /// Scheme at lattice size `n` with the configured exponents and rates.
    pub fn scheme(&self, n: usize, rates: [f64; 4]) -> Result<ScalingScheme> {
        ScalingScheme::from_exponents(
            n,
            self.p,
            self.sigma_exponent,
            self.k_exponent,
            BoundaryRates::new(rates),
        )
    }

    /// Union of the observation times and the dense grid, starting at 0.
    pub fn dense_times(&self) -> Vec<f64> {
        let steps = (self.t_end / self.snapshot_spacing).ceil() as usize;
        let mut times: Vec<f64> = (0..=steps)
            .map(|k| (k as f64 * self.snapshot_spacing).min(self.t_end))
            .chain(self.obs_times.iter().copied())
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        times
    }

    pub fn insensitivity_sizes(&self) -> Vec<usize> {
        if self.insensitivity_n.is_empty() {
            self.n_list.clone()
        } else {
            self.insensitivity_n.clone()
        }
    }
}

/// Independent generator for `(stream, n, replica)`: the base seed picks
/// the key, the job picks one of ChaCha's 2⁶⁴ streams.
pub fn job_rng(seed: u64, stream: Stream, n: usize, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((stream as u64) << 56));
    rng.set_stream(((n as u64) << 32) | replica as u64);
    rng
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
n_list = [64, 128]
ensemble = 4
pde_cells = 1024

[initial]
kind = "step"
left = 0.9
right = 0.1
at = 0.5

[tolerances]
l1_ratio = 0.7
"#,
        )
        .unwrap();
        assert_eq!(cfg.n_list, vec![64, 128]);
        assert_eq!(cfg.tolerances.l1_ratio, 0.7);
        assert_eq!(cfg.tolerances.oracle_z, 4.0);
        assert_eq!(cfg.p, 1.0);
    }

    #[test]
    fn invalid_files_rejected() {
        assert!(ExperimentConfig::from_toml_str("obs_times = [0.3, 0.1]").is_err());
        assert!(ExperimentConfig::from_toml_str("pde_cells = 100").is_err());
        assert!(ExperimentConfig::from_toml_str("p = \"one\"").is_err());
        assert!(
            ExperimentConfig::from_toml_str("[profile]\nkind = \"example\"\ngamma = 1.0\nrho0 = 0.0\nrho1 = 0.8")
                .is_err()
        );
    }

    #[test]
    fn dense_grid_contains_observations() {
        let cfg = ExperimentConfig {
            snapshot_spacing: 0.03,
            ..Default::default()
        };
        let times = cfg.dense_times();
        assert_eq!(times[0], 0.0);
        assert_eq!(*times.last().unwrap(), 0.5);
        for t in &cfg.obs_times {
            assert!(times.contains(t));
        }
        assert!(times.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.03 + 1e-12));
    }

    #[test]
    fn job_streams_are_distinct_and_reproducible() {
        let draw = |s, n, r| job_rng(7, s, n, r).gen::<u64>();
        assert_eq!(draw(Stream::Sweep, 256, 3), draw(Stream::Sweep, 256, 3));
        assert_ne!(draw(Stream::Sweep, 256, 3), draw(Stream::Sweep, 256, 4));
        assert_ne!(draw(Stream::Sweep, 256, 3), draw(Stream::Sweep, 512, 3));
        assert_ne!(draw(Stream::Sweep, 256, 3), draw(Stream::Oracle, 256, 3));
    }
}
