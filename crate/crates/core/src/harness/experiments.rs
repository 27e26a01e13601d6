//! The experiments: convergence sweep, boundary behaviour, small-system
//! validation and solver diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{job_rng, ExperimentConfig, Stream};
use super::ensemble::{run_ensemble, EnsembleSummary, Estimate};
use crate::coarsegrain::band_grid;
use crate::diagnostics::{
    energy_functional, entropy_residual, l1_distance, Bump, CellSource, L1Distance, TestFunction,
};
use crate::error::{invalid, Error, Result};
use crate::field::{SpaceTimeField, UniformGrid};
use crate::microsim::{sample_initial, BoundaryRates, Configuration, ScalingScheme, Simulator, DEFAULT_SIGMA_EXPONENT};
use crate::oracle::{build_generator, compare_marginals, marginal_evolution, product_distribution, ZTable};
use crate::pde_solver::{kruzhkov_pair, solve, SolveOptions};
use crate::profiles::{check_conditions, CheckOptions, Edge, ProfilePair, Verdict};

/// The fine solve every lattice size is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeReference {
    pub cells: usize,
    pub steps: usize,
    #[serde(skip)]
    pub field: Option<SpaceTimeField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub error: Option<String>,
    pub summary: Option<EnsembleSummary>,
    pub l1: Option<L1Distance>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    fn failed(n: usize, e: Error) -> Self {
        Self {
            n,
            error: Some(e.to_string()),
            summary: None,
            l1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub comparison_grid: UniformGrid,
    pub pde: PdeReference,
    pub rows: Vec<SweepRow>,
    /// Strict decrease of the mean L¹ distance in N; absent with fewer than two rows.
    pub monotone: Option<bool>,
    /// Mean L¹ at the largest N over that at the smallest.
    pub ratio: Option<f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

/// Common comparison grid: `cells` cells over the intersection of the
/// bands `[K/N, 1 − K/N]` of all sizes.
pub fn comparison_grid(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<UniformGrid> {
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for &n in sizes {
        let k = (n as f64).powf(cfg.k_exponent).round() as usize;
        if 2 * k > n {
            continue;
        }
        let g = band_grid(n, k);
        lo = lo.max(g.origin);
        hi = hi.min(g.end());
    }
    if !(hi > lo) {
        return Err(invalid("lattice bands do not overlap"));
    }
    Ok(UniformGrid {
        origin: lo,
        dx: (hi - lo) / cfg.comparison_cells as f64,
        cells: cfg.comparison_cells,
    })
}

pub fn solve_reference(cfg: &ExperimentConfig) -> Result<PdeReference> {
    let profile = cfg.profile.build()?;
    let sol = solve(
        |x| cfg.initial.eval(&profile, x),
        &profile,
        cfg.p,
        cfg.pde_cells,
        &cfg.obs_times,
        SolveOptions {
            cfl_factor: cfg.cfl,
            record_every_step: false,
        },
    )?;
    Ok(PdeReference {
        cells: cfg.pde_cells,
        steps: sol.steps,
        field: Some(sol.observations()),
    })
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

pub fn run_convergence_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut sizes = cfg.n_list.clone();
    sizes.sort_unstable();
    let grid = comparison_grid(cfg, &sizes)?;
    let pde = solve_reference(cfg)?;
    let reference = pde.field.as_ref().expect("reference field");
    let rows: Vec<SweepRow> = sizes
        .iter()
        .map(|&n| {
            let outcome = run_ensemble(cfg, n, cfg.boundary_rates).and_then(|summary| {
                let l1 = l1_distance(&summary.field().field, reference, grid)?;
                Ok((summary, l1))
            });
            match outcome {
                Ok((summary, l1)) => SweepRow {
                    n,
                    error: None,
                    summary: Some(summary),
                    l1: Some(l1),
                },
                Err(e) => SweepRow::failed(n, e),
            }
        })
        .collect();
    let means: Vec<f64> = rows.iter().filter_map(|r| r.l1.as_ref().map(|d| d.mean)).collect();
    let (monotone, ratio) = if means.len() >= 2 {
        (
            Some(strictly_decreasing(&means)),
            Some(means[means.len() - 1] / means[0]),
        )
    } else {
        (None, None)
    };
    let passed = rows.iter().all(SweepRow::ok)
        && monotone.unwrap_or(true)
        && ratio.map_or(true, |r| r < cfg.tolerances.l1_ratio);
    Ok(SweepReport {
        config: cfg.clone(),
        comparison_grid: grid,
        pde,
        rows,
        monotone,
        ratio,
        passed,
        notes: vec!["convergence is checked on the finite grid of observation times only".into()],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningRow {
    pub n: usize,
    pub edge: Edge,
    pub t: f64,
    pub y: f64,
    pub average: Estimate,
    /// `t·ρ(edge)`.
    pub target: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningTrend {
    pub n: usize,
    pub edge: Edge,
    pub t: f64,
    /// Gap decreases as `y` shrinks.
    pub decreasing: bool,
    pub finest_gap: f64,
    pub limit: f64,
    /// Least-squares line through `(y, gap)` evaluated at `y = 0`.
    pub intercept: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsensitivityRow {
    pub n: usize,
    pub error: Option<String>,
    pub gap: Option<L1Distance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub cond_v1: Verdict,
    pub cond_v3: Verdict,
    pub pinning: Vec<PinningRow>,
    pub trends: Vec<PinningTrend>,
    pub insensitivity: Vec<InsensitivityRow>,
    /// Gap at the largest size over the gap at the smallest.
    pub insensitivity_ratio: Option<f64>,
    pub pinning_passed: bool,
    pub insensitivity_passed: bool,
    pub passed: bool,
}

fn intercept(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return my;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    my - sxy / sxx * mx
}

/// Pinning of boundary blocks to the reservoir and insensitivity to the
/// reservoir rates. Main-rate ensembles are taken from `sweep` when given.
pub fn run_boundary_experiments(cfg: &ExperimentConfig, sweep: Option<&SweepReport>) -> Result<BoundaryReport> {
    cfg.validate()?;
    let profile = cfg.profile.build()?;
    let y_check = crate::profiles::dyadic_scales(0.25, 12);
    let conditions = check_conditions(&profile, &y_check, CheckOptions::default())?;
    let (v1, v3) = (conditions.cond_v1.verdict, conditions.cond_v3.verdict);
    if !(v1.holds() || v3.holds()) {
        return Err(invalid(
            "boundary experiments need the growth condition on 1/V or on y·inf V to hold",
        ));
    }
    let mut sizes = cfg.n_list.clone();
    sizes.sort_unstable();
    let main: Vec<(usize, Result<EnsembleSummary>)> = sizes
        .iter()
        .map(|&n| {
            let reused = sweep
                .and_then(|s| s.rows.iter().find(|r| r.n == n))
                .and_then(|r| r.summary.clone());
            (n, reused.map_or_else(|| run_ensemble(cfg, n, cfg.boundary_rates), Ok))
        })
        .collect();

    let mut pinning = Vec::new();
    let mut trends = Vec::new();
    for (n, summary) in &main {
        let Ok(summary) = summary else { continue };
        for (o, &t) in cfg.obs_times.iter().enumerate() {
            for (e, edge) in [Edge::Left, Edge::Right].into_iter().enumerate() {
                let target = t * profile.boundary_density(edge);
                let mut points = Vec::new();
                for (yi, &y) in cfg.y_grid.iter().enumerate() {
                    let average = summary.boundary[o][yi][e];
                    let gap = (average.mean - target).abs();
                    points.push((y, gap));
                    pinning.push(PinningRow {
                        n: *n,
                        edge,
                        t,
                        y,
                        average,
                        target,
                        gap,
                    });
                }
                if (t - cfg.t_end).abs() <= 1e-12 {
                    let mut by_y = points.clone();
                    by_y.sort_by(|a, b| b.0.total_cmp(&a.0));
                    let gaps: Vec<f64> = by_y.iter().map(|p| p.1).collect();
                    let finest_gap = *gaps.last().unwrap_or(&f64::NAN);
                    let limit = cfg.tolerances.boundary_fraction * t;
                    let decreasing = strictly_decreasing(&gaps);
                    trends.push(PinningTrend {
                        n: *n,
                        edge,
                        t,
                        decreasing,
                        finest_gap,
                        limit,
                        intercept: intercept(&points),
                        passed: decreasing && finest_gap < limit,
                    });
                }
            }
        }
    }
    let largest = main.iter().rev().find(|(_, s)| s.is_ok()).map(|(n, _)| *n);
    let pinning_passed = largest.is_some()
        && trends.iter().filter(|t| Some(t.n) == largest).all(|t| t.passed)
        && trends.iter().any(|t| Some(t.n) == largest);

    let pair_sizes: Vec<usize> = {
        let mut v = cfg.insensitivity_sizes();
        v.sort_unstable();
        v
    };
    let grid = comparison_grid(cfg, &sizes)?;
    let insensitivity: Vec<InsensitivityRow> = pair_sizes
        .iter()
        .map(|&n| {
            let base = main.iter().find(|(m, _)| *m == n).map(|(_, s)| s);
            let outcome = match base {
                Some(Ok(base)) => run_ensemble(cfg, n, cfg.alt_boundary_rates)
                    .and_then(|alt| l1_distance(&base.field().field, &alt.field().field, grid)),
                Some(Err(e)) => Err(invalid(format!("main ensemble failed: {e}"))),
                None => Err(invalid("size missing from the sweep")),
            };
            match outcome {
                Ok(gap) => InsensitivityRow {
                    n,
                    error: None,
                    gap: Some(gap),
                },
                Err(e) => InsensitivityRow {
                    n,
                    error: Some(e.to_string()),
                    gap: None,
                },
            }
        })
        .collect();
    let gaps: Vec<f64> = insensitivity
        .iter()
        .filter_map(|r| r.gap.as_ref().map(|g| g.mean))
        .collect();
    let insensitivity_ratio = (gaps.len() >= 2).then(|| gaps[gaps.len() - 1] / gaps[0]);
    let insensitivity_passed = insensitivity.iter().all(|r| r.error.is_none())
        && insensitivity_ratio.is_some_and(|r| r < cfg.tolerances.insensitivity_ratio);
    Ok(BoundaryReport {
        cond_v1: v1,
        cond_v3: v3,
        pinning,
        trends,
        insensitivity,
        insensitivity_ratio,
        pinning_passed,
        insensitivity_passed,
        passed: pinning_passed && insensitivity_passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub n: usize,
    pub p: f64,
    pub sigma: f64,
    pub table: ZTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// Small-lattice scheme for exact comparisons: default viscosity exponent,
/// no window checks (they only make sense asymptotically).
pub fn oracle_scheme(cfg: &ExperimentConfig, n: usize, p: f64) -> Result<ScalingScheme> {
    let sigma = (n as f64).powf(DEFAULT_SIGMA_EXPONENT).round();
    ScalingScheme::unchecked(n, p, sigma, 1, BoundaryRates::new(cfg.boundary_rates))
}

/// Ensemble of small-lattice snapshots at `times`, one row per time.
pub fn oracle_ensemble(
    cfg: &ExperimentConfig,
    profile: &ProfilePair,
    scheme: &ScalingScheme,
    lattice: &crate::profiles::LatticeProfile,
    stream_id: usize,
) -> Result<Vec<Vec<Configuration>>> {
    let settings = &cfg.oracle;
    let n = scheme.n;
    let runs: Vec<Vec<Configuration>> = (0..settings.ensemble)
        .into_par_iter()
        .map(|r| {
            let mut rng = job_rng(cfg.seed, Stream::Oracle, stream_id, r);
            let init = sample_initial(|x| settings.initial.eval(profile, x), n, &mut rng)?;
            let mut sim = Simulator::new(init, scheme, lattice, rng)?;
            let mut snaps = Vec::with_capacity(settings.times.len());
            sim.run_observed(&settings.times, |_, c| snaps.push(c.clone()))?;
            Ok(snaps)
        })
        .collect::<Result<_>>()?;
    Ok((0..settings.times.len())
        .map(|o| runs.iter().map(|s| s[o].clone()).collect())
        .collect())
}

/// z-scores of simulated site marginals against the exact law. The
/// simulator runs `sim_scheme`, the exact law uses `exact_scheme`; they
/// differ only in mutation checks.
pub fn oracle_tables(
    cfg: &ExperimentConfig,
    exact_scheme: &ScalingScheme,
    sim_scheme: &ScalingScheme,
    stream_id: usize,
) -> Result<Vec<ZTable>> {
    let profile = cfg.profile.build()?;
    let n = exact_scheme.n;
    let lattice = profile.discretize_unchecked(n);
    let gen = build_generator(exact_scheme, &lattice)?;
    let probs: Vec<f64> = (0..=n)
        .map(|i| cfg.oracle.initial.eval(&profile, i as f64 / n as f64))
        .collect();
    let init = product_distribution(&probs)?;
    let ensembles = oracle_ensemble(cfg, &profile, sim_scheme, &lattice, stream_id)?;
    cfg.oracle
        .times
        .iter()
        .zip(&ensembles)
        .map(|(&t, ens)| {
            let exact = marginal_evolution(&gen, &init, t, cfg.oracle.tail)?;
            let mut table = compare_marginals(ens, &exact)?;
            table.passed = table.max_abs_z < cfg.tolerances.oracle_z;
            Ok(table)
        })
        .collect()
}

pub fn run_oracle_validation(cfg: &ExperimentConfig) -> Result<OracleReport> {
    let mut rows = Vec::new();
    for &n in &cfg.oracle.n_list {
        for (pi, &p) in cfg.oracle.p_list.iter().enumerate() {
            let scheme = oracle_scheme(cfg, n, p)?;
            for table in oracle_tables(cfg, &scheme, &scheme, n * 64 + pi)? {
                rows.push(OracleRow {
                    n,
                    p,
                    sigma: scheme.sigma,
                    table,
                });
            }
        }
    }
    let max_abs_z = rows.iter().map(|r| r.table.max_abs_z).fold(0.0, f64::max);
    Ok(OracleReport {
        passed: !rows.is_empty() && rows.iter().all(|r| r.table.passed),
        rows,
        max_abs_z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub cells: usize,
    pub energy: f64,
    /// Smallest entropy residual over all sampled pairs and test functions.
    pub entropy_floor: f64,
    pub entropy_tolerance: f64,
    pub entropy_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub rows: Vec<DiagnosticsRow>,
    pub energy_ratios: Vec<f64>,
    pub energy_passed: bool,
    /// The negative part of the entropy floor shrinks under refinement.
    pub floor_improves: bool,
    pub entropy_passed: bool,
    pub notes: Vec<String>,
}

/// Random nonnegative bumps inside `[0, T) × (0, 1)`, away from the edge cells.
pub fn random_test_function(rng: &mut impl Rng, t_end: f64) -> TestFunction {
    let rt = rng.gen_range(0.1..0.4) * t_end;
    let t0 = rng.gen_range(0.0..t_end - rt);
    let rx = rng.gen_range(0.05..0.25);
    let x0 = rng.gen_range(rx + 0.01..1.0 - rx - 0.01);
    TestFunction::single(Bump {
        amplitude: 1.0,
        t0,
        rt,
        x0,
        rx,
    })
}

pub fn run_solver_diagnostics(cfg: &ExperimentConfig) -> Result<SolverDiagnostics> {
    let profile = cfg.profile.build()?;
    let settings = &cfg.diagnostics;
    let delta = settings.smoothing;
    let rows: Vec<DiagnosticsRow> = settings
        .cells
        .iter()
        .map(|&m| {
            let sol = solve(
                |x| cfg.initial.eval(&profile, x),
                &profile,
                cfg.p,
                m,
                &[cfg.t_end],
                SolveOptions {
                    cfl_factor: cfg.cfl,
                    record_every_step: true,
                },
            )?;
            let source = CellSource {
                vbar: sol.vbar.clone(),
                rhobar: sol.rhobar.clone(),
            };
            let energy = energy_functional(&sol.field, &source, cfg.t_end)?;
            // identical draws on every grid so floors are comparable
            let mut rng = job_rng(cfg.seed, Stream::Diagnostics, 0, 0);
            let u0 = sol.field.values[0].clone();
            let mut floor = f64::INFINITY;
            for _ in 0..settings.entropies {
                let pair = kruzhkov_pair(rng.gen::<f64>(), delta, cfg.p)?;
                for _ in 0..settings.test_functions {
                    let phi = random_test_function(&mut rng, cfg.t_end);
                    floor = floor.min(entropy_residual(&sol.field, &pair, &phi, &u0, &source)?);
                }
            }
            let tol = cfg.tolerances.entropy_factor * (1.0 / m as f64 + delta);
            Ok(DiagnosticsRow {
                cells: m,
                energy,
                entropy_floor: floor,
                entropy_tolerance: tol,
                entropy_passed: floor >= -tol,
            })
        })
        .collect::<Result<_>>()?;
    let energy_ratios: Vec<f64> = rows.windows(2).map(|w| w[1].energy / w[0].energy).collect();
    let tol = &cfg.tolerances;
    let energy_passed = rows.iter().all(|r| r.energy.is_finite())
        && energy_ratios
            .iter()
            .all(|&r| r >= tol.energy_ratio_low && r <= tol.energy_ratio_high);
    let floor_improves = rows
        .windows(2)
        .all(|w| w[1].entropy_floor.min(0.0) >= w[0].entropy_floor.min(0.0));
    Ok(SolverDiagnostics {
        entropy_passed: rows.iter().all(|r| r.entropy_passed) && floor_improves,
        energy_passed,
        floor_improves,
        energy_ratios,
        rows,
        notes: vec![
            "entropy tolerance 5(dx + delta) is empirical; the continuum inequality has no finite-grid bound".into(),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub residual: Estimate,
    /// `K²/σ + N/K`.
    pub envelope: f64,
    /// Residual over the fitted bound `C·envelope`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub constant: f64,
    pub one_block: Vec<ScalingRow>,
    pub h1_constant: f64,
    pub h1: Vec<ScalingRow>,
    pub passed: bool,
}

/// Compares the measured block residuals with the growth of their bounds
/// `C(K²/σ + N/K)` and `C(1/σ + N/K³)`, `C` fitted at the smallest size.
pub fn one_block_scaling(sweep: &SweepReport, sizes: &[usize], factor: f64) -> Result<ScalingReport> {
    let summaries: Vec<&EnsembleSummary> = sizes
        .iter()
        .map(|&n| {
            sweep
                .rows
                .iter()
                .find(|r| r.n == n)
                .and_then(|r| r.summary.as_ref())
                .ok_or_else(|| invalid(format!("no ensemble for N = {n}")))
        })
        .collect::<Result<_>>()?;
    if summaries.is_empty() {
        return Err(invalid("no sizes to compare"));
    }
    let rows = |residual: &dyn Fn(&EnsembleSummary) -> Estimate, envelope: &dyn Fn(&EnsembleSummary) -> f64| {
        let c = residual(summaries[0]).mean / envelope(summaries[0]);
        let rows: Vec<ScalingRow> = summaries
            .iter()
            .map(|s| ScalingRow {
                n: s.n,
                k: s.k,
                sigma: s.sigma,
                residual: residual(s),
                envelope: envelope(s),
                relative: residual(s).mean / (c * envelope(s)),
            })
            .collect();
        (c, rows)
    };
    let (constant, one_block) = rows(&|s| s.one_block, &|s| {
        let k = s.k as f64;
        k * k / s.sigma + s.n as f64 / k
    });
    let (h1_constant, h1) = rows(&|s| s.h1, &|s| {
        let k = s.k as f64;
        1.0 / s.sigma + s.n as f64 / (k * k * k)
    });
    Ok(ScalingReport {
        passed: one_block.iter().all(|r| r.relative <= factor),
        constant,
        one_block,
        h1_constant,
        h1,
    })
}
