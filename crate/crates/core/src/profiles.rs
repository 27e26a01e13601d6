//! Relaxation potential `V` and reservoir density `ρ`.
//!
//! The built-in family is `V(x) = x^{-γ} + (1-x)^{-γ}` with
//! `ρ(x) = [ρ₀(1-x)^γ + ρ₁x^γ] / [(1-x)^γ + x^γ]`; anything else comes in
//! as a tabulation. Near the edges both are evaluated from the distance to
//! the edge so that `V(1-d)` keeps full precision for tiny `d`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, integrate_to_endpoint, EndpointIntegral, EndpointOptions, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
}

impl Edge {
    fn position(self, distance: f64) -> f64 {
        match self {
            Edge::Left => distance,
            Edge::Right => 1.0 - distance,
        }
    }
}

/// Piecewise-linear table on sorted abscissae, constant beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(invalid("table needs matching, nonempty columns"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("table abscissae must be strictly increasing"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(invalid("table entries must be finite"));
        }
        Ok(Self { xs, ys })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![value, value])
    }

    /// Two whitespace- or comma-separated columns `x value`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            };
            match cols.as_slice() {
                [x, y] => {
                    xs.push(parse(x)?);
                    ys.push(parse(y)?);
                }
                _ => return Err(Error::Config(format!("line {}: expected two columns", lineno + 1))),
            }
        }
        Self::new(xs, ys)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let hi = self.xs.partition_point(|&v| v <= x);
        let (x0, x1) = (self.xs[hi - 1], self.xs[hi]);
        let (y0, y1) = (self.ys[hi - 1], self.ys[hi]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileKind {
    PowerPair { gamma: f64, rho0: f64, rho1: f64 },
    Tabulated { potential: Table, density: Table },
}

/// The pair `(V, ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePair {
    kind: ProfileKind,
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must lie in (0, 1)")))
    }
}

impl ProfilePair {
    /// The two-reservoir family with exponent `gamma`.
    pub fn example(gamma: f64, rho0: f64, rho1: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma = {gamma} must be positive")));
        }
        check_open_unit("rho0", rho0)?;
        check_open_unit("rho1", rho1)?;
        Ok(Self {
            kind: ProfileKind::PowerPair { gamma, rho0, rho1 },
        })
    }

    /// Tabulated profiles. `V` may vanish (useful to switch the relaxation
    /// off) but must not be negative; `ρ` must stay inside `(0, 1)`.
    pub fn tabulated(potential: Table, density: Table) -> Result<Self> {
        if potential.values().iter().any(|&v| v < 0.0) {
            return Err(invalid("tabulated potential must be nonnegative"));
        }
        for &r in density.values() {
            check_open_unit("tabulated density", r)?;
        }
        Ok(Self {
            kind: ProfileKind::Tabulated { potential, density },
        })
    }

    pub fn constant(potential: f64, density: f64) -> Result<Self> {
        Self::tabulated(Table::constant(potential)?, Table::constant(density)?)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.kind {
            ProfileKind::PowerPair { gamma, .. } => Some(gamma),
            ProfileKind::Tabulated { .. } => None,
        }
    }

    /// `V(x)` for `x ∈ (0, 1)`.
    pub fn potential(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::PowerPair { gamma, .. } => x.powf(-gamma) + (1.0 - x).powf(-gamma),
            ProfileKind::Tabulated { potential, .. } => potential.eval(x),
        }
    }

    /// `ρ(x)` for `x ∈ [0, 1]`.
    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::PowerPair { gamma, rho0, rho1 } => {
                let a = (1.0 - x).powf(*gamma);
                let b = x.powf(*gamma);
                (rho0 * a + rho1 * b) / (a + b)
            }
            ProfileKind::Tabulated { density, .. } => density.eval(x),
        }
    }

    /// `V` at distance `d` from `edge`.
    pub fn potential_near(&self, edge: Edge, d: f64) -> f64 {
        match &self.kind {
            ProfileKind::PowerPair { gamma, .. } => d.powf(-gamma) + (1.0 - d).powf(-gamma),
            ProfileKind::Tabulated { potential, .. } => potential.eval(edge.position(d)),
        }
    }

    /// `ρ` at distance `d` from `edge`.
    pub fn density_near(&self, edge: Edge, d: f64) -> f64 {
        match &self.kind {
            ProfileKind::PowerPair { gamma, rho0, rho1 } => {
                let (near, far) = match edge {
                    Edge::Left => (rho0, rho1),
                    Edge::Right => (rho1, rho0),
                };
                let a = (1.0 - d).powf(*gamma);
                let b = d.powf(*gamma);
                (near * a + far * b) / (a + b)
            }
            ProfileKind::Tabulated { density, .. } => density.eval(edge.position(d)),
        }
    }

    /// `ρ(0)` or `ρ(1)`.
    pub fn boundary_density(&self, edge: Edge) -> f64 {
        self.density_near(edge, 0.0)
    }

    /// The source `G(x, u) = V(x)(u − ρ(x))`.
    pub fn source(&self, x: f64, u: f64) -> f64 {
        self.potential(x) * (u - self.density(x))
    }

    /// Lattice values `V_i = V(i/N)`, `ρ_i = ρ(i/N)` for `i = 1..N-1`.
    pub fn discretize(&self, n: usize) -> Result<LatticeProfile> {
        if n < 4 {
            return Err(invalid(format!("lattice size N = {n} must be at least 4")));
        }
        Ok(self.discretize_unchecked(n))
    }

    /// Same as [`discretize`](Self::discretize) without the size floor; used
    /// by the exact small-system oracle.
    pub fn discretize_unchecked(&self, n: usize) -> LatticeProfile {
        let mut potential = vec![0.0; n + 1];
        let mut density = vec![0.0; n + 1];
        for i in 1..n {
            let x = i as f64 / n as f64;
            potential[i] = self.potential(x);
            density[i] = self.density(x);
        }
        LatticeProfile { potential, density }
    }

    /// `M·∫_cell V` over cell `j` of a uniform `m`-cell grid together with
    /// the `V`-weighted mean of `ρ` on that cell.
    pub fn cell_average_potential(&self, m: usize, j: usize) -> Result<CellAverage> {
        self.cell_average_with(m, j, EndpointOptions::default())
    }

    pub fn cell_average_with(&self, m: usize, j: usize, opts: EndpointOptions) -> Result<CellAverage> {
        if m == 0 || j >= m {
            return Err(invalid(format!("cell {j} outside grid of {m} cells")));
        }
        let width = 1.0 / m as f64;
        let edge = if j == 0 {
            Some(Edge::Left)
        } else if j == m - 1 {
            Some(Edge::Right)
        } else {
            None
        };
        if let Some(edge) = edge {
            // A 1-cell grid touches both edges; treat it through the left one.
            let mass = integrate_to_endpoint(|d| self.potential_near(edge, d), width, opts)?;
            return match mass {
                EndpointIntegral::Divergent { .. } => Ok(CellAverage {
                    potential: f64::INFINITY,
                    density: self.boundary_density(edge),
                }),
                EndpointIntegral::Finite(mass) => {
                    let weighted = integrate_to_endpoint(
                        |d| self.potential_near(edge, d) * self.density_near(edge, d),
                        width,
                        opts,
                    )?;
                    let plain = integrate(|d| self.density_near(edge, d), 0.0, width, opts.tol)?;
                    Ok(self.finish_cell(mass.value, weighted.value(), plain.value, m))
                }
            };
        }
        let (a, b) = (j as f64 * width, (j + 1) as f64 * width);
        let mass = integrate(|x| self.potential(x), a, b, opts.tol)?;
        let weighted = integrate(|x| self.potential(x) * self.density(x), a, b, opts.tol)?;
        let plain = integrate(|x| self.density(x), a, b, opts.tol)?;
        Ok(self.finish_cell(mass.value, weighted.value, plain.value, m))
    }

    fn finish_cell(&self, mass: f64, weighted: f64, plain: f64, m: usize) -> CellAverage {
        let m = m as f64;
        let density = if mass > 0.0 { weighted / mass } else { plain * m };
        CellAverage {
            potential: mass * m,
            density,
        }
    }

    /// Cell averages for the whole grid.
    pub fn cell_profile(&self, m: usize) -> Result<CellProfile> {
        let mut potential = Vec::with_capacity(m);
        let mut density = Vec::with_capacity(m);
        for j in 0..m {
            let c = self.cell_average_potential(m, j)?;
            potential.push(c.potential);
            density.push(c.density);
        }
        Ok(CellProfile { potential, density })
    }
}

/// Site values; indices `0` and `N` are unused and hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeProfile {
    pub potential: Vec<f64>,
    pub density: Vec<f64>,
}

impl LatticeProfile {
    pub fn n(&self) -> usize {
        self.potential.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellAverage {
    /// `M·∫_cell V`, `+∞` when the integral diverges.
    pub potential: f64,
    /// `∫_cell Vρ / ∫_cell V`, or the edge value of `ρ` when `V` is not
    /// integrable on the cell.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellProfile {
    pub potential: Vec<f64>,
    pub density: Vec<f64>,
}

impl CellProfile {
    pub fn len(&self) -> usize {
        self.potential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potential.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self == Verdict::Holds
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegrabilityEvidence {
    pub verdict: Verdict,
    /// `∫_y^{1/2} V` (mirrored on the right) for each scale of the grid.
    pub partial_integrals: Vec<f64>,
    /// Sum over resolved dyadic shells when the edge integral was judged divergent.
    pub shell_sum: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthEvidence {
    pub verdict: Verdict,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub combined: Vec<f64>,
    /// Largest combined value over the finer half of the scale grid.
    pub limsup_estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayEvidence {
    pub verdict: Verdict,
    pub sequence: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub y_grid: Vec<f64>,
    pub nonintegrable_left: IntegrabilityEvidence,
    pub nonintegrable_right: IntegrabilityEvidence,
    /// `y⁻²∫₀^y [1/V(x) + 1/V(1−x)] dx`; `left`/`right` hold the two halves.
    pub cond_v1: GrowthEvidence,
    /// `∫₀^y V[ρ−ρ(0)]² + ∫_{1−y}^1 V[ρ−ρ(1)]²`.
    pub cond_v2: DecayEvidence,
    /// `y·inf_{(0,y)} V`, worst of the two edges.
    pub cond_v3: DecayEvidence,
    /// Largest second finite difference of `ρ` on a uniform grid, a proxy for
    /// the Lipschitz constant of `ρ'`.
    pub density_curvature: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub quad_tol: f64,
    pub divergence_threshold: f64,
    /// `cond_v1` holds when the finer half of the sequence stays within
    /// this factor of the coarser half.
    pub bounded_growth: f64,
    /// `cond_v2` holds when the finest value is below this fraction of the coarsest.
    pub decay_fraction: f64,
    /// `cond_v3` holds when the finest value exceeds this multiple of the coarsest.
    pub blowup_factor: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            quad_tol: 1e-10,
            divergence_threshold: 1e3,
            bounded_growth: 2.0,
            decay_fraction: 0.1,
            blowup_factor: 10.0,
        }
    }
}

/// Numerical audit of the integrability and growth conditions on `V` and `ρ`.
pub fn check_conditions(profile: &ProfilePair, y_grid: &[f64], opts: CheckOptions) -> Result<ConditionReport> {
    if y_grid.len() < 2 {
        return Err(invalid("scale grid needs at least two entries"));
    }
    if y_grid.iter().any(|&y| !(y > 0.0 && y < 0.5)) || y_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("scale grid must be strictly decreasing inside (0, 1/2)"));
    }
    let tol = Tolerance::new(opts.quad_tol * 1e-2, opts.quad_tol);
    let endpoint = EndpointOptions {
        tol,
        divergence_threshold: opts.divergence_threshold,
        ..EndpointOptions::default()
    };

    let integrability = |edge: Edge| -> Result<IntegrabilityEvidence> {
        let mut partial_integrals = Vec::with_capacity(y_grid.len());
        for &y in y_grid {
            let v = integrate(|d| profile.potential_near(edge, d), y, 0.5, tol)?;
            partial_integrals.push(v.value);
        }
        let (verdict, shell_sum) = match integrate_to_endpoint(|d| profile.potential_near(edge, d), y_grid[0], endpoint)
        {
            Ok(EndpointIntegral::Divergent { partial, .. }) => {
                let increasing = partial_integrals.windows(2).all(|w| w[1] > w[0]);
                if increasing {
                    (Verdict::Holds, Some(partial))
                } else {
                    (Verdict::Inconclusive, Some(partial))
                }
            }
            Ok(EndpointIntegral::Finite(_)) => (Verdict::Fails, None),
            Err(_) => (Verdict::Inconclusive, None),
        };
        Ok(IntegrabilityEvidence {
            verdict,
            partial_integrals,
            shell_sum,
        })
    };
    let nonintegrable_left = integrability(Edge::Left)?;
    let nonintegrable_right = integrability(Edge::Right)?;

    // cond_v1
    let inverse_mass = |edge: Edge, y: f64| -> Result<f64> {
        let e = integrate(
            |d| {
                let v = profile.potential_near(edge, d);
                if v.is_infinite() {
                    0.0
                } else {
                    1.0 / v
                }
            },
            0.0,
            y,
            tol,
        )?;
        Ok(e.value / (y * y))
    };
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &y in y_grid {
        left.push(inverse_mass(Edge::Left, y)?);
        right.push(inverse_mass(Edge::Right, y)?);
    }
    let combined: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a + b).collect();
    let half = combined.len() / 2;
    let coarse_max = combined[..half.max(1)].iter().cloned().fold(0.0, f64::max);
    let fine_max = combined[half..].iter().cloned().fold(0.0, f64::max);
    let mut v1 = if !fine_max.is_finite() {
        Verdict::Fails
    } else if fine_max <= opts.bounded_growth * coarse_max {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    if v1.holds() && !(nonintegrable_left.verdict.holds() && nonintegrable_right.verdict.holds()) {
        // bounded y⁻²∫1/V forces non-integrability; disagreement means the
        // scale grid is too coarse to decide
        v1 = Verdict::Inconclusive;
    }
    let cond_v1 = GrowthEvidence {
        verdict: v1,
        left,
        right,
        combined,
        limsup_estimate: fine_max,
    };

    // cond_v2
    let mut sequence = Vec::with_capacity(y_grid.len());
    let mut v2_inconclusive = false;
    for &y in y_grid {
        let mut total = 0.0;
        for edge in [Edge::Left, Edge::Right] {
            let r0 = profile.boundary_density(edge);
            let g = |d: f64| {
                let dev = profile.density_near(edge, d) - r0;
                if dev == 0.0 {
                    0.0
                } else {
                    profile.potential_near(edge, d) * dev * dev
                }
            };
            match integrate_to_endpoint(g, y, endpoint) {
                Ok(r) => total += r.value(),
                Err(_) => v2_inconclusive = true,
            }
        }
        sequence.push(total);
    }
    let v2 = if v2_inconclusive {
        Verdict::Inconclusive
    } else if sequence.iter().any(|v| !v.is_finite()) {
        Verdict::Fails
    } else {
        let first = sequence[0];
        let last = *sequence.last().unwrap();
        let nonincreasing = sequence.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
        if nonincreasing && (last <= opts.decay_fraction * first || last <= 1e-12) {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    };
    let cond_v2 = DecayEvidence { verdict: v2, sequence };

    // cond_v3
    let mut sequence = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        let mut worst = f64::INFINITY;
        for edge in [Edge::Left, Edge::Right] {
            let inf = (0..=64)
                .map(|k| y * 10f64.powf(-6.0 * k as f64 / 64.0))
                .map(|d| profile.potential_near(edge, d))
                .fold(f64::INFINITY, f64::min);
            worst = worst.min(inf);
        }
        sequence.push(y * worst);
    }
    let half = sequence.len() / 2;
    let increasing_tail = sequence[half..].windows(2).all(|w| w[1] > w[0]);
    let v3 = if increasing_tail && *sequence.last().unwrap() >= opts.blowup_factor * sequence[0] {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    let cond_v3 = DecayEvidence { verdict: v3, sequence };

    let grid = 512;
    let h = 1.0 / grid as f64;
    let density_curvature = (1..grid)
        .map(|i| {
            let x = i as f64 * h;
            (profile.density(x + h) - 2.0 * profile.density(x) + profile.density(x - h)).abs() / (h * h)
        })
        .fold(0.0, f64::max);

    Ok(ConditionReport {
        y_grid: y_grid.to_vec(),
        nonintegrable_left,
        nonintegrable_right,
        cond_v1,
        cond_v2,
        cond_v3,
        density_curvature,
    })
}

/// `count` scales starting at `start`, each half the previous one.
pub fn dyadic_scales(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * 0.5f64.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn symmetric_midpoint() {
        let p = ProfilePair::example(1.0, 0.5, 0.5).unwrap();
        assert_eq!(p.potential(0.5), 4.0);
        assert_eq!(p.density(0.5), 0.5);
    }

    #[test]
    fn equal_weight_average() {
        let p = ProfilePair::example(1.0, 0.2, 0.8).unwrap();
        assert!(close(p.density(0.5), 0.5, 1e-15));
    }

    #[test]
    fn source_identity() {
        let (gamma, r0, r1) = (2.0, 0.3, 0.7);
        let p = ProfilePair::example(gamma, r0, r1).unwrap();
        let (x, u) = (0.25f64, 0.6);
        let direct = (u - r0) / x.powf(gamma) + (u - r1) / (1.0 - x).powf(gamma);
        assert!((p.source(x, u) - direct).abs() < 1e-12);
    }

    #[test]
    fn edges_match_reservoirs() {
        let p = ProfilePair::example(1.5, 0.3, 0.9).unwrap();
        assert_eq!(p.density(0.0), 0.3);
        assert_eq!(p.density(1.0), 0.9);
        assert_eq!(p.boundary_density(Edge::Left), 0.3);
        assert_eq!(p.boundary_density(Edge::Right), 0.9);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ProfilePair::example(0.0, 0.5, 0.5).is_err());
        assert!(ProfilePair::example(-1.0, 0.5, 0.5).is_err());
        assert!(ProfilePair::example(1.0, 0.0, 0.5).is_err());
        assert!(ProfilePair::example(1.0, 0.5, 1.0).is_err());
        assert!(ProfilePair::constant(-1.0, 0.5).is_err());
        assert!(ProfilePair::constant(1.0, 1.0).is_err());
    }

    #[test]
    fn discretize_values() {
        let p = ProfilePair::example(1.0, 0.5, 0.5).unwrap();
        let lat = p.discretize(4).unwrap();
        assert!(close(lat.potential[1], 4.0 + 4.0 / 3.0, 1e-15));
        assert!(lat.density[1..4].iter().all(|&r| r == 0.5));
        let lat = p.discretize(1000).unwrap();
        assert!(close(lat.potential[1], 1000.0 + 1000.0 / 999.0, 1e-14));
        assert!(lat.potential[1..1000].iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(p.discretize(3).is_err());
    }

    #[test]
    fn boundary_cell_diverges() {
        let p = ProfilePair::example(1.0, 0.2, 0.8).unwrap();
        let c = p.cell_average_potential(8, 0).unwrap();
        assert!(c.potential.is_infinite());
        assert_eq!(c.density, 0.2);
        let c = p.cell_average_potential(8, 7).unwrap();
        assert!(c.potential.is_infinite());
        assert_eq!(c.density, 0.8);
    }

    #[test]
    fn weak_potential_boundary_cell_is_finite() {
        let p = ProfilePair::example(0.5, 0.2, 0.8).unwrap();
        let c = p.cell_average_potential(8, 0).unwrap();
        // 8·[2√(1/8) + 2 − 2√(7/8)]
        let exact = 8.0 * (2.0 * (0.125f64).sqrt() + 2.0 - 2.0 * (0.875f64).sqrt());
        assert!(close(c.potential, exact, 1e-8), "{} vs {exact}", c.potential);
        assert!(c.density > 0.2 && c.density < 0.3);
    }

    #[test]
    fn constant_potential_cell() {
        let p = ProfilePair::constant(2.0, 0.4).unwrap();
        for j in 0..8 {
            let c = p.cell_average_potential(8, j).unwrap();
            assert!(close(c.potential, 2.0, 1e-12));
            assert!(close(c.density, 0.4, 1e-12));
        }
    }

    #[test]
    fn interior_cell_closed_form() {
        let p = ProfilePair::example(1.0, 0.5, 0.5).unwrap();
        let c = p.cell_average_potential(8, 3).unwrap();
        // antiderivative of 1/x + 1/(1-x) is ln x − ln(1−x)
        let exact = 8.0 * ((4.0f64 / 3.0).ln() + (5.0f64 / 4.0).ln());
        assert!(close(c.potential, exact, 1e-12));
    }

    #[test]
    fn cell_and_point_values_agree_to_first_order() {
        let p = ProfilePair::example(1.0, 0.2, 0.8).unwrap();
        for m in [32usize, 64, 128] {
            for j in [m / 4, m / 2, 3 * m / 4] {
                let c = p.cell_average_potential(m, j).unwrap();
                let mid = (j as f64 + 0.5) / m as f64;
                assert!((c.potential - p.potential(mid)).abs() < 20.0 / m as f64);
            }
        }
    }

    #[test]
    fn table_parsing_and_interpolation() {
        let t = Table::parse("# x v\n0 1\n0.5, 3\n1 3\n").unwrap();
        assert_eq!(t.eval(0.25), 2.0);
        assert_eq!(t.eval(-1.0), 1.0);
        assert_eq!(t.eval(2.0), 3.0);
        assert!(Table::parse("0 1 2\n").is_err());
        assert!(Table::parse("1 1\n0 1\n").is_err());
    }

    fn grid() -> Vec<f64> {
        dyadic_scales(0.25, 12)
    }

    #[test]
    fn harmonic_family_conditions() {
        let p = ProfilePair::example(1.0, 0.2, 0.8).unwrap();
        let r = check_conditions(&p, &grid(), CheckOptions::default()).unwrap();
        assert!(r.nonintegrable_left.verdict.holds());
        assert!(r.nonintegrable_right.verdict.holds());
        assert!(r.cond_v1.verdict.holds());
        assert!(r.cond_v2.verdict.holds());
        // y·inf V → 1 for γ = 1; the growth condition needs γ > 1
        assert_eq!(r.cond_v3.verdict, Verdict::Fails);
        // y⁻²∫₀^y x(1−x) dx = 1/2 − y/3 per edge
        let y = *grid().last().unwrap();
        assert!(close(r.cond_v1.left[11], 0.5 - y / 3.0, 1e-8));
        assert!(close(r.cond_v1.right[11], 0.5 - y / 3.0, 1e-8));
    }

    #[test]
    fn constant_density_has_zero_v2_sequence() {
        let p = ProfilePair::example(1.0, 0.5, 0.5).unwrap();
        let r = check_conditions(&p, &grid(), CheckOptions::default()).unwrap();
        assert!(r.cond_v2.verdict.holds());
        assert!(r.cond_v2.sequence.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_family_satisfies_all() {
        let p = ProfilePair::example(2.0, 0.3, 0.7).unwrap();
        let r = check_conditions(&p, &grid(), CheckOptions::default()).unwrap();
        assert!(r.nonintegrable_left.verdict.holds());
        assert!(r.nonintegrable_right.verdict.holds());
        assert!(r.cond_v1.verdict.holds());
        assert!(r.cond_v2.verdict.holds());
        assert!(r.cond_v3.verdict.holds());
    }

    #[test]
    fn integrable_family_is_flagged() {
        let p = ProfilePair::example(0.5, 0.3, 0.7).unwrap();
        let r = check_conditions(&p, &grid(), CheckOptions::default()).unwrap();
        assert_eq!(r.nonintegrable_left.verdict, Verdict::Fails);
        assert_eq!(r.nonintegrable_right.verdict, Verdict::Fails);
        assert_eq!(r.cond_v1.verdict, Verdict::Fails);
    }

    #[test]
    fn bounded_potential_fails_everything_but_v2() {
        let p = ProfilePair::constant(3.0, 0.4).unwrap();
        let r = check_conditions(&p, &grid(), CheckOptions::default()).unwrap();
        assert_eq!(r.nonintegrable_left.verdict, Verdict::Fails);
        assert_eq!(r.cond_v1.verdict, Verdict::Fails);
        assert_eq!(r.cond_v3.verdict, Verdict::Fails);
        assert!(r.cond_v2.verdict.holds());
    }

    #[test]
    fn rejects_bad_scale_grid() {
        let p = ProfilePair::example(1.0, 0.5, 0.5).unwrap();
        assert!(check_conditions(&p, &[0.1, 0.2], CheckOptions::default()).is_err());
        assert!(check_conditions(&p, &[0.6, 0.2], CheckOptions::default()).is_err());
        assert!(check_conditions(&p, &[0.1], CheckOptions::default()).is_err());
    }

    #[test]
    fn v1_implies_nonintegrability_across_family() {
        for gamma in [0.3, 0.8, 1.0, 1.5, 2.0, 3.0] {
            let p = ProfilePair::example(gamma, 0.3, 0.6).unwrap();
            let r = check_conditions(&p, &grid(), CheckOptions::default()).unwrap();
            if r.cond_v1.verdict.holds() {
                assert!(r.nonintegrable_left.verdict.holds());
                assert!(r.nonintegrable_right.verdict.holds());
            }
        }
    }
}
