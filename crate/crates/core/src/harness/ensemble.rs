//! Seeded ensembles of trajectories reduced to the statistics the
//! experiments need, so no trajectory is kept in memory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{job_rng, ExperimentConfig, Stream};
use crate::coarsegrain::{band_block_averages, band_grid, boundary_block_density, trapezoid_until, EmpiricalField};
use crate::diagnostics::{h1_sum, one_block_sum};
use crate::error::Result;
use crate::field::SpaceTimeField;
use crate::microsim::{sample_initial, EventCounters, ScalingScheme, Simulator};
use crate::profiles::{Edge, ProfilePair};

/// What one trajectory contributes.
#[derive(Debug, Clone)]
struct TrajectorySummary {
    /// Band block averages at each observation time.
    fields: Vec<Vec<f64>>,
    /// `[obs][y][edge]` boundary-block time integrals over `[0, t_obs]`.
    boundary: Vec<Vec<[f64; 2]>>,
    one_block: f64,
    h1: f64,
    counters: EventCounters,
    events: u64,
}

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(xs: impl IntoIterator<Item = f64> + Clone) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for x in xs {
            n += 1;
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let se = if n > 1 {
            ((sq - n as f64 * mean * mean).max(0.0) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Estimate { mean, se }
    }
}

/// Ensemble statistics at one lattice size and reservoir setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub members: usize,
    /// Ensemble mean of the empirical density field at the observation times.
    #[serde(skip)]
    pub mean_field: Option<EmpiricalField>,
    /// Ensemble mean of `η̂²` cell by cell.
    #[serde(skip)]
    pub second_moment: Vec<Vec<f64>>,
    /// `[obs][y]` left and right boundary-block time integrals.
    pub boundary: Vec<Vec<[Estimate; 2]>>,
    pub one_block: Estimate,
    pub h1: Estimate,
    pub counters: EventCounters,
    pub events: u64,
}

impl EnsembleSummary {
    pub fn field(&self) -> &EmpiricalField {
        self.mean_field.as_ref().expect("mean field present")
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    profile: &ProfilePair,
    scheme: &ScalingScheme,
    lattice: &crate::profiles::LatticeProfile,
    dense: &[f64],
    replica: usize,
) -> Result<TrajectorySummary> {
    let n = scheme.n;
    let k = scheme.k;
    let mut rng = job_rng(cfg.seed, Stream::Sweep, n, replica);
    let init = sample_initial(|x| cfg.initial.eval(profile, x), n, &mut rng)?;
    let mut sim = Simulator::new(init, scheme, lattice, rng)?;
    let ys = &cfg.y_grid;
    let mut fields = Vec::with_capacity(cfg.obs_times.len());
    let mut block_series: Vec<[Vec<(f64, f64)>; 2]> = vec![[Vec::new(), Vec::new()]; ys.len()];
    let mut one_block = Vec::with_capacity(dense.len());
    let mut h1 = Vec::with_capacity(dense.len());
    let mut next_obs = 0;
    sim.run_observed(dense, |t, c| {
        for (series, &y) in block_series.iter_mut().zip(ys) {
            series[0].push((t, boundary_block_density(c, Edge::Left, y)));
            series[1].push((t, boundary_block_density(c, Edge::Right, y)));
        }
        one_block.push((t, one_block_sum(c, k, scheme.p)));
        h1.push((t, h1_sum(c, k)));
        if next_obs < cfg.obs_times.len() && (t - cfg.obs_times[next_obs]).abs() <= 1e-12 {
            fields.push(band_block_averages(c.sites(), k));
            next_obs += 1;
        }
    })?;
    let boundary = cfg
        .obs_times
        .iter()
        .map(|&t| {
            block_series
                .iter()
                .map(|s| [trapezoid_until(&s[0], t).0, trapezoid_until(&s[1], t).0])
                .collect()
        })
        .collect();
    Ok(TrajectorySummary {
        fields,
        boundary,
        one_block: trapezoid_until(&one_block, cfg.t_end).0,
        h1: trapezoid_until(&h1, cfg.t_end).0,
        counters: *sim.counters(),
        events: sim.events(),
    })
}

/// Runs `cfg.ensemble` replicas at size `n` under reservoir `rates`.
/// Replica seeds depend only on `(cfg.seed, n, replica)`, so two settings
/// run with the same seeds start from the same configurations.
pub fn run_ensemble(cfg: &ExperimentConfig, n: usize, rates: [f64; 4]) -> Result<EnsembleSummary> {
    let profile = cfg.profile.build()?;
    let scheme = cfg.scheme(n, rates)?;
    let lattice = profile.discretize(n)?;
    let dense = cfg.dense_times();
    let runs: Vec<TrajectorySummary> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|r| run_one(cfg, &profile, &scheme, &lattice, &dense, r))
        .collect::<Result<_>>()?;
    let m = runs.len() as f64;
    let cells = n - 2 * scheme.k + 1;
    let obs = cfg.obs_times.len();
    let mut mean = vec![vec![0.0; cells]; obs];
    let mut second = vec![vec![0.0; cells]; obs];
    for run in &runs {
        for (o, f) in run.fields.iter().enumerate() {
            for (j, &v) in f.iter().enumerate() {
                mean[o][j] += v;
                second[o][j] += v * v;
            }
        }
    }
    for row in mean.iter_mut().chain(second.iter_mut()) {
        for v in row.iter_mut() {
            *v /= m;
        }
    }
    let boundary = (0..obs)
        .map(|o| {
            (0..cfg.y_grid.len())
                .map(|y| {
                    let side = |e: usize| Estimate::of(runs.iter().map(move |r| r.boundary[o][y][e]));
                    [side(0), side(1)]
                })
                .collect()
        })
        .collect();
    let mut counters = EventCounters::default();
    for r in &runs {
        counters.merge(&r.counters);
    }
    Ok(EnsembleSummary {
        n,
        k: scheme.k,
        sigma: scheme.sigma,
        members: runs.len(),
        mean_field: Some(EmpiricalField {
            n,
            k: scheme.k,
            field: SpaceTimeField::new(band_grid(n, scheme.k), cfg.obs_times.clone(), mean)?,
        }),
        second_moment: second,
        boundary,
        one_block: Estimate::of(runs.iter().map(|r| r.one_block)),
        h1: Estimate::of(runs.iter().map(|r| r.h1)),
        counters,
        events: runs.iter().map(|r| r.events).sum(),
    })
}
