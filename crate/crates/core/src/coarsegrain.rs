//! Macroscopic observables of particle configurations: empirical pairings,
//! triangular-kernel block averages and boundary-block time averages.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{SpaceTimeField, UniformGrid};
use crate::microsim::{Configuration, Trajectory};
use crate::profiles::Edge;

/// `w_j = (K − |j|)/K²` for `j = −K+1, …, K−1`.
pub fn triangular_weights(k: usize) -> Vec<f64> {
    let k2 = (k * k) as f64;
    (0..2 * k - 1)
        .map(|idx| (k - (idx as isize - (k as isize - 1)).unsigned_abs()) as f64 / k2)
        .collect()
}

fn check_band(n: usize, i: usize, k: usize) -> Result<()> {
    if k == 0 || 2 * k > n {
        return Err(invalid(format!("block half-width K = {k} does not fit N = {n}")));
    }
    if i < k || i > n - k {
        return Err(Error::OutOfBand {
            index: i,
            lo: k,
            hi: n - k,
        });
    }
    Ok(())
}

/// `η̂_{i,K} = Σ_{|j|<K} w_j η_{i−j}` for `K ≤ i ≤ N−K`.
pub fn block_average(config: &Configuration, i: usize, k: usize) -> Result<f64> {
    check_band(config.n(), i, k)?;
    let sites = config.sites();
    let weights = triangular_weights(k);
    Ok(weights
        .iter()
        .enumerate()
        .map(|(idx, w)| w * sites[i + k - 1 - idx] as f64)
        .sum())
}

/// Block averages of an integer sequence `s_0..s_N` over the whole band
/// `i = K..=N−K`, in `O(N)`.
pub fn band_block_averages(seq: &[u8], k: usize) -> Vec<f64> {
    let n = seq.len() - 1;
    assert!(k >= 1 && 2 * k <= n, "block half-width {k} does not fit N = {n}");
    block_averages_in(seq, k, k, n - k)
}

/// Block averages `Σ_{|j|<K} w_j s_{i−j}` for `i = lo..=hi`, which needs
/// `K − 1 ≤ lo` and `hi + K ≤ seq.len()`.
///
/// The triangular kernel is the convolution of two boxes of width `K`, so
/// `K²·ŝ_i = Σ_{m=i−K+1}^{i} B_m` with box sums `B_m = s_m + … + s_{m+K−1}`.
/// Everything stays in integers until the final division.
pub fn block_averages_in(seq: &[u8], k: usize, lo: usize, hi: usize) -> Vec<f64> {
    assert!(k >= 1 && lo + 1 >= k && hi + k <= seq.len() && lo <= hi);
    let mut prefix = Vec::with_capacity(seq.len() + 1);
    prefix.push(0i64);
    for &s in seq {
        prefix.push(prefix.last().unwrap() + s as i64);
    }
    let first_box = lo + 1 - k;
    let mut box_prefix = Vec::with_capacity(hi - first_box + 2);
    box_prefix.push(0i64);
    for m in first_box..=hi {
        let b = prefix[m + k] - prefix[m];
        box_prefix.push(box_prefix.last().unwrap() + b);
    }
    let k2 = (k * k) as f64;
    (lo..=hi)
        .map(|i| (box_prefix[i - first_box + 1] - box_prefix[i + 1 - k - first_box]) as f64 / k2)
        .collect()
}

/// `⟨π^N, ψ⟩ = N⁻¹ Σ_{i=0}^{N} η_i ψ(i/N)`.
pub fn empirical_pairing(config: &Configuration, psi: impl Fn(f64) -> f64) -> f64 {
    let n = config.n();
    let nf = n as f64;
    config
        .sites()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(i, _)| psi(i as f64 / nf))
        .sum::<f64>()
        / nf
}

/// Grid of the empirical density: cells `[i/N − 1/2N, i/N + 1/2N)` for `i = K..=N−K`.
pub fn band_grid(n: usize, k: usize) -> UniformGrid {
    let nf = n as f64;
    UniformGrid {
        origin: (k as f64 - 0.5) / nf,
        dx: 1.0 / nf,
        cells: n - 2 * k + 1,
    }
}

/// `u^N(t, ·)` at every snapshot, together with the scales it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalField {
    pub n: usize,
    pub k: usize,
    pub field: SpaceTimeField,
}

impl EmpiricalField {
    pub fn to_csv(&self) -> String {
        self.field.to_csv(&format!("N={} K={}", self.n, self.k))
    }
}

pub fn empirical_density_field(trajectory: &Trajectory, k: usize) -> Result<EmpiricalField> {
    let n = trajectory.n();
    if k == 0 || 2 * k > n {
        return Err(invalid(format!("block half-width K = {k} does not fit N = {n}")));
    }
    let values = trajectory
        .snapshots
        .iter()
        .map(|c| band_block_averages(c.sites(), k))
        .collect();
    Ok(EmpiricalField {
        n,
        k,
        field: SpaceTimeField::new(band_grid(n, k), trajectory.times.clone(), values)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryBlockAverage {
    /// `∫₀ᵗ (L+1)⁻¹ Σ_{block} η_i(s) ds` with `L = ⌊yN⌋`.
    pub value: f64,
    pub sites: usize,
    /// Whether the snapshots cover `[0, t]` with gaps no larger than requested.
    pub sufficient: bool,
}

/// Density of the block of `⌊yN⌋ + 1` sites at `edge`.
pub fn boundary_block_density(config: &Configuration, edge: Edge, y: f64) -> f64 {
    let n = config.n();
    let l = (y * n as f64).floor() as usize;
    let sites = config.sites();
    let block = match edge {
        Edge::Left => &sites[..=l],
        Edge::Right => &sites[n - l..],
    };
    block.iter().map(|&b| b as usize).sum::<usize>() as f64 / (l + 1) as f64
}

/// Trapezoid-in-time integral of the boundary-block density over `[0, t]`.
pub fn boundary_block_time_average(
    trajectory: &Trajectory,
    edge: Edge,
    y: f64,
    t: f64,
    max_spacing: f64,
) -> Result<BoundaryBlockAverage> {
    if !(y > 0.0 && y < 0.5) {
        return Err(invalid(format!("block scale y = {y} must lie in (0, 1/2)")));
    }
    let times = &trajectory.times;
    if times.is_empty() || t > *times.last().unwrap() + 1e-12 || t < 0.0 {
        return Err(invalid(format!("horizon t = {t} not covered by the trajectory")));
    }
    let dens: Vec<f64> = trajectory
        .snapshots
        .iter()
        .map(|c| boundary_block_density(c, edge, y))
        .collect();
    let series: Vec<(f64, f64)> = times.iter().copied().zip(dens).collect();
    let l = (y * trajectory.n() as f64).floor() as usize;
    let (value, max_gap, covers_start) = trapezoid_until(&series, t);
    Ok(BoundaryBlockAverage {
        value,
        sites: l + 1,
        sufficient: covers_start && max_gap <= max_spacing,
    })
}

/// Trapezoid rule over samples `(t, g)` on `[t_0, t]`, linear interpolation
/// at the cut. Returns the integral, the largest gap used and whether the
/// samples start at time zero.
pub(crate) fn trapezoid_until(series: &[(f64, f64)], t: f64) -> (f64, f64, bool) {
    let covers_start = series.first().is_some_and(|s| s.0 <= 1e-12);
    let mut total = 0.0;
    let mut max_gap: f64 = 0.0;
    for w in series.windows(2) {
        let ((t0, g0), (t1, g1)) = (w[0], w[1]);
        if t0 >= t {
            break;
        }
        if t1 <= t0 {
            continue;
        }
        let (end, g_end) = if t1 > t {
            (t, g0 + (g1 - g0) * (t - t0) / (t1 - t0))
        } else {
            (t1, g1)
        };
        total += 0.5 * (g0 + g_end) * (end - t0);
        max_gap = max_gap.max(t1 - t0);
    }
    (total, max_gap, covers_start)
}
