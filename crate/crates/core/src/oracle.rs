//! Exact transient law of small systems by uniformization.
//!
//! The generator is priced here straight from its defining formulas and
//! deliberately shares no rate code with the simulator, so the two can
//! check each other.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::microsim::{Configuration, ScalingScheme};
use crate::profiles::LatticeProfile;

/// Largest lattice the oracle accepts (`2⁹ = 512` states).
pub const MAX_ORACLE_N: usize = 8;
pub const DEFAULT_TAIL: f64 = 1e-12;

/// Site `i` of state `s` is bit `i`.
#[inline]
fn bit(s: usize, i: usize) -> f64 {
    ((s >> i) & 1) as f64
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Sparse generator on `{0,1}^{N+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub n: usize,
    /// Off-diagonal `(target, rate)` per state, positive rates only.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// `−Σ` of the row's off-diagonal rates.
    pub diagonal: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Off-diagonal entry `Q[from][to]`, or the diagonal when equal.
    pub fn entry(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return self.diagonal[from];
        }
        self.rows[from].iter().filter(|(t, _)| *t == to).map(|(_, r)| r).sum()
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().map(|d| -d).fold(0.0, f64::max)
    }

    /// Largest `|row sum|` with the diagonal included.
    pub fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diagonal)
            .map(|(row, d)| compensated_sum(row.iter().map(|e| e.1).chain([*d])).abs())
            .fold(0.0, f64::max)
    }
}

/// `Q` for the process with hyperbolic time scaling `N`:
/// swaps at `N(p η_i(1−η_{i+1}) + (1−p) η_{i+1}(1−η_i) + σ/2)`, interior
/// flips at `V_i[ρ_i(1−η_i) + (1−ρ_i)η_i]`, boundary flips at
/// `N[c_in(1−η) + c_out η]`.
pub fn build_generator(scheme: &ScalingScheme, lattice: &LatticeProfile) -> Result<GeneratorMatrix> {
    let n = scheme.n;
    if n > MAX_ORACLE_N {
        return Err(Error::StateSpace(n));
    }
    if lattice.potential.len() != n + 1 || lattice.density.len() != n + 1 {
        return Err(invalid("lattice profile does not match the scheme"));
    }
    let scale = n as f64;
    let (p, sigma) = (scheme.p, scheme.sigma);
    let b = scheme.boundary;
    let dim = 1usize << (n + 1);
    let mut rows = Vec::with_capacity(dim);
    let mut diagonal = Vec::with_capacity(dim);
    for s in 0..dim {
        let mut row = Vec::new();
        for i in 0..n {
            let (a, c) = (bit(s, i), bit(s, i + 1));
            if a == c {
                continue;
            }
            let rate = scale * (p * a * (1.0 - c) + (1.0 - p) * c * (1.0 - a) + sigma / 2.0);
            if rate > 0.0 {
                row.push((s ^ (0b11 << i), rate));
            }
        }
        for i in 0..=n {
            let e = bit(s, i);
            let rate = if i == 0 {
                scale * (b.in_left * (1.0 - e) + b.out_left * e)
            } else if i == n {
                scale * (b.in_right * (1.0 - e) + b.out_right * e)
            } else {
                let (v, r) = (lattice.potential[i], lattice.density[i]);
                v * (r * (1.0 - e) + (1.0 - r) * e)
            };
            if rate > 0.0 {
                row.push((s ^ (1 << i), rate));
            }
        }
        diagonal.push(-compensated_sum(row.iter().map(|e| e.1)));
        rows.push(row);
    }
    Ok(GeneratorMatrix { n, rows, diagonal })
}

/// Index of a configuration in the oracle's state space.
pub fn state_index(config: &Configuration) -> usize {
    config.sites().iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
}

/// Product law with `P(η_i = 1) = probs[i]`.
pub fn product_distribution(probs: &[f64]) -> Result<Vec<f64>> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("site probabilities must lie in [0, 1]"));
    }
    let dim = 1usize << probs.len();
    Ok((0..dim)
        .map(|s| {
            probs
                .iter()
                .enumerate()
                .map(|(i, &p)| if bit(s, i) == 1.0 { p } else { 1.0 - p })
                .product()
        })
        .collect())
}

/// Per-site occupation probabilities of a law on the state space.
pub fn site_marginals(dist: &[f64], n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            compensated_sum(
                dist.iter()
                    .enumerate()
                    .filter(|(s, _)| bit(*s, i) == 1.0)
                    .map(|(_, &w)| w),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub time: f64,
    pub per_site: Vec<f64>,
    pub distribution: Vec<f64>,
    /// Poisson mass left out of the series, a bound on the total-variation error.
    pub truncation: f64,
    pub terms: usize,
}

/// `init · exp(tQ)` by uniformization, truncated once the neglected
/// Poisson mass falls below `tail`.
pub fn marginal_evolution(gen: &GeneratorMatrix, init: &[f64], t: f64, tail: f64) -> Result<Marginals> {
    if init.len() != gen.dim() {
        return Err(invalid("initial law does not match the state space"));
    }
    if !(t >= 0.0) {
        return Err(invalid(format!("time t = {t} must be nonnegative")));
    }
    let total: f64 = init.iter().sum();
    if init.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(invalid("initial law must be a probability vector"));
    }
    let lambda = gen.max_exit_rate();
    let lt = lambda * t;
    if lt == 0.0 {
        return Ok(Marginals {
            time: t,
            per_site: site_marginals(init, gen.n),
            distribution: init.to_vec(),
            truncation: 0.0,
            terms: 1,
        });
    }
    let mut v = init.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut acc = vec![0.0; v.len()];
    let mut log_w = -lt;
    let mut covered = 0.0;
    let mut k = 0usize;
    loop {
        let w = log_w.exp();
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += w * x;
        }
        covered += w;
        if (k as f64) > lt && 1.0 - covered < tail {
            break;
        }
        // v ← v (I + Q/Λ)
        for (s, x) in next.iter_mut().enumerate() {
            *x = v[s] * (1.0 + gen.diagonal[s] / lambda);
        }
        for (s, row) in gen.rows.iter().enumerate() {
            if v[s] == 0.0 {
                continue;
            }
            for &(to, r) in row {
                next[to] += v[s] * r / lambda;
            }
        }
        std::mem::swap(&mut v, &mut next);
        k += 1;
        log_w += lt.ln() - (k as f64).ln();
        if k > 10_000_000 {
            return Err(invalid("uniformization series did not converge"));
        }
    }
    Ok(Marginals {
        time: t,
        per_site: site_marginals(&acc, gen.n),
        distribution: acc,
        truncation: (1.0 - covered).max(0.0),
        terms: k + 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTable {
    pub time: f64,
    pub samples: usize,
    pub empirical: Vec<f64>,
    pub exact: Vec<f64>,
    pub z: Vec<f64>,
    pub max_abs_z: f64,
    /// `max|z| < 4`; with at most a few dozen sites per table this keeps
    /// the familywise false-alarm rate below 10⁻³ (Bonferroni).
    pub passed: bool,
}

/// `z = (mean − exact)/√(exact(1 − exact)/m)`, zero for a degenerate
/// exact marginal matched by the sample.
pub fn z_score(mean: f64, exact: f64, m: usize) -> f64 {
    let var = exact * (1.0 - exact);
    if var <= 0.0 {
        return if (mean - exact).abs() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    (mean - exact) / (var / m as f64).sqrt()
}

pub fn compare_means(empirical: &[f64], exact: &[f64], m: usize, time: f64) -> Result<ZTable> {
    if empirical.len() != exact.len() {
        return Err(Error::Incompatible("marginal tables differ in length".into()));
    }
    let z: Vec<f64> = empirical.iter().zip(exact).map(|(&e, &x)| z_score(e, x, m)).collect();
    let max_abs_z = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(ZTable {
        time,
        samples: m,
        empirical: empirical.to_vec(),
        exact: exact.to_vec(),
        z,
        max_abs_z,
        passed: max_abs_z < 4.0,
    })
}

/// Site-wise z-scores of an ensemble of configurations observed at `time`.
pub fn compare_marginals(ensemble: &[Configuration], exact: &Marginals) -> Result<ZTable> {
    let m = ensemble.len();
    if m == 0 {
        return Err(invalid("empty ensemble"));
    }
    let sites = exact.per_site.len();
    if ensemble.iter().any(|c| c.n() + 1 != sites) {
        return Err(Error::Incompatible("ensemble and marginals differ in N".into()));
    }
    let mut counts = vec![0usize; sites];
    for c in ensemble {
        for (k, &b) in counts.iter_mut().zip(c.sites()) {
            *k += b as usize;
        }
    }
    let means: Vec<f64> = counts.iter().map(|&k| k as f64 / m as f64).collect();
    compare_means(&means, &exact.per_site, m, exact.time)
}
