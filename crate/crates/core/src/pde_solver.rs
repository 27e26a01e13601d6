//! Finite-volume entropy solver for `∂ₜu + ∂ₓJ(u) + V(x)(u − ρ(x)) = 0` on
//! `(0, 1)` with Dirichlet data `ρ(0)`, `ρ(1)`.
//!
//! Transport uses the Godunov flux; the stiff source is integrated exactly
//! in a symmetric (Strang) splitting, so cells with `V̄ = +∞` are projected
//! onto `ρ̄`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{SpaceTimeField, UniformGrid};
use crate::profiles::{CellProfile, Edge, ProfilePair};

/// Smallest grid the solver accepts.
pub const MIN_CELLS: usize = 8;
pub const DEFAULT_CFL: f64 = 0.9;
pub const DEFAULT_SMOOTHING: f64 = 1e-3;

/// `J(u) = (2p − 1)u(1 − u)`.
#[inline]
pub fn flux_j(u: f64, p: f64) -> f64 {
    (2.0 * p - 1.0) * u * (1.0 - u)
}

/// `J′(u) = (2p − 1)(1 − 2u)`.
#[inline]
pub fn flux_derivative(u: f64, p: f64) -> f64 {
    (2.0 * p - 1.0) * (1.0 - 2.0 * u)
}

fn check_unit(name: &str, u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {u} outside [0, 1]")))
    }
}

/// Godunov flux for the concave `J` (`p ≥ 1/2`).
pub fn godunov_flux(ul: f64, ur: f64, p: f64) -> Result<f64> {
    check_unit("left state", ul)?;
    check_unit("right state", ur)?;
    if !(0.5..=1.0).contains(&p) {
        return Err(invalid(format!("asymmetry p = {p} must lie in [1/2, 1]")));
    }
    Ok(godunov(ul, ur, p))
}

#[inline]
fn godunov(ul: f64, ur: f64, p: f64) -> f64 {
    if ul <= ur {
        flux_j(ul, p).min(flux_j(ur, p))
    } else {
        flux_j(0.5f64.clamp(ur, ul), p)
    }
}

/// Exact solution of `u′ = −V̄(u − ρ̄)` after time `dt`.
#[inline]
pub fn relax_exact(u: f64, vbar: f64, rhobar: f64, dt: f64) -> f64 {
    if vbar == f64::INFINITY {
        return rhobar;
    }
    rhobar + (u - rhobar) * (-vbar * dt).exp()
}

/// Cell averages on a uniform `M`-cell grid together with the cell data of
/// the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub m: usize,
    pub u: Vec<f64>,
    pub dx: f64,
    pub time: f64,
    /// `M·∫_cell V`; `+∞` on cells where `V` is not integrable.
    pub vbar: Vec<f64>,
    pub rhobar: Vec<f64>,
    pub p: f64,
    /// Ghost values `ρ(0)` and `ρ(1)`.
    pub boundary: (f64, f64),
}

/// Mass changes of one step: `Δ(Σu·dx) = source_first + inflow − outflow + source_second`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepBudget {
    pub source_first: f64,
    pub inflow: f64,
    pub outflow: f64,
    pub source_second: f64,
}

impl StepBudget {
    pub fn total(&self) -> f64 {
        self.source_first + self.inflow - self.outflow + self.source_second
    }
}

impl DensityField {
    pub fn new(u: Vec<f64>, cells: &CellProfile, p: f64, boundary: (f64, f64)) -> Result<Self> {
        let m = u.len();
        if m < MIN_CELLS {
            return Err(invalid(format!("grid of {m} cells; at least {MIN_CELLS} required")));
        }
        if cells.len() != m {
            return Err(Error::Incompatible("cell profile and field differ in size".into()));
        }
        if !(0.5..=1.0).contains(&p) {
            return Err(invalid(format!("asymmetry p = {p} must lie in [1/2, 1]")));
        }
        for (j, &v) in u.iter().enumerate() {
            check_unit(&format!("u[{j}]"), v)?;
        }
        check_unit("left boundary value", boundary.0)?;
        check_unit("right boundary value", boundary.1)?;
        Ok(Self {
            m,
            u,
            dx: 1.0 / m as f64,
            time: 0.0,
            vbar: cells.potential.clone(),
            rhobar: cells.density.clone(),
            p,
            boundary,
        })
    }

    /// Samples `u0` at cell midpoints.
    pub fn from_profile(u0: impl Fn(f64) -> f64, profile: &ProfilePair, p: f64, m: usize) -> Result<Self> {
        if m < MIN_CELLS {
            return Err(invalid(format!("grid of {m} cells; at least {MIN_CELLS} required")));
        }
        let grid = UniformGrid::unit(m);
        let u = (0..m).map(|j| u0(grid.center(j))).collect();
        let cells = profile.cell_profile(m)?;
        let boundary = (
            profile.boundary_density(Edge::Left),
            profile.boundary_density(Edge::Right),
        );
        Self::new(u, &cells, p, boundary)
    }

    pub fn grid(&self) -> UniformGrid {
        UniformGrid::unit(self.m)
    }

    /// Largest stable step `dx / max|J′|`.
    pub fn cfl_limit(&self) -> f64 {
        let speed = (2.0 * self.p - 1.0).abs();
        if speed == 0.0 {
            f64::INFINITY
        } else {
            self.dx / speed
        }
    }

    pub fn mass(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.dx
    }

    /// One Strang step; the input is left untouched.
    pub fn advance(&self, dt: f64) -> Result<DensityField> {
        let mut next = self.clone();
        let mut stepper = Stepper::new(self.m);
        stepper.step(&mut next, dt)?;
        Ok(next)
    }

    /// One Strang step in place, reporting where the mass went.
    pub fn advance_accounted(&mut self, dt: f64) -> Result<StepBudget> {
        Stepper::new(self.m).step(self, dt)
    }
}

/// Reusable buffers and cached decay factors for repeated steps.
struct Stepper {
    fluxes: Vec<f64>,
    decay_dt: f64,
    decay: Vec<f64>,
}

impl Stepper {
    fn new(m: usize) -> Self {
        Self {
            fluxes: vec![0.0; m + 1],
            decay_dt: f64::NAN,
            decay: vec![0.0; m],
        }
    }

    fn relax(&mut self, field: &mut DensityField, half: f64) -> f64 {
        if half != self.decay_dt {
            for (d, &v) in self.decay.iter_mut().zip(&field.vbar) {
                *d = if v == f64::INFINITY { 0.0 } else { (-v * half).exp() };
            }
            self.decay_dt = half;
        }
        let mut change = 0.0;
        for ((u, &r), &d) in field.u.iter_mut().zip(&field.rhobar).zip(&self.decay) {
            let new = r + (*u - r) * d;
            change += new - *u;
            *u = new;
        }
        change * field.dx
    }

    fn step(&mut self, field: &mut DensityField, dt: f64) -> Result<StepBudget> {
        let limit = field.cfl_limit();
        if !(dt >= 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let p = field.p;
        let m = field.m;
        let source_first = self.relax(field, 0.5 * dt);
        let u = &field.u;
        self.fluxes[0] = godunov(field.boundary.0, u[0], p);
        for j in 1..m {
            self.fluxes[j] = godunov(u[j - 1], u[j], p);
        }
        self.fluxes[m] = godunov(u[m - 1], field.boundary.1, p);
        let ratio = dt / field.dx;
        for (j, u) in field.u.iter_mut().enumerate() {
            *u = (*u - ratio * (self.fluxes[j + 1] - self.fluxes[j])).clamp(0.0, 1.0);
        }
        let inflow = dt * self.fluxes[0];
        let outflow = dt * self.fluxes[m];
        let source_second = self.relax(field, 0.5 * dt);
        field.time += dt;
        Ok(StepBudget {
            source_first,
            inflow,
            outflow,
            source_second,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Fraction of the CFL limit used as the nominal step, in `(0, 1]`.
    pub cfl_factor: f64,
    /// Keep every step instead of only the requested times.
    pub record_every_step: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            cfl_factor: DEFAULT_CFL,
            record_every_step: false,
        }
    }
}

/// Recorded states of one solve. `times[0] = 0` always; `observed[i]` is
/// the index in `times` of the `i`-th requested time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub field: SpaceTimeField,
    pub observed: Vec<usize>,
    pub vbar: Vec<f64>,
    pub rhobar: Vec<f64>,
    pub p: f64,
    pub steps: usize,
}

impl Solution {
    pub fn m(&self) -> usize {
        self.field.grid.cells
    }

    /// The field restricted to the requested times.
    pub fn observations(&self) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.field.grid,
            times: self.observed.iter().map(|&i| self.field.times[i]).collect(),
            values: self.observed.iter().map(|&i| self.field.values[i].clone()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        self.observations().to_csv(&format!("M={} p={}", self.m(), self.p))
    }
}

/// Marches from `u0` through `obs_times`, landing on each exactly.
pub fn solve(
    u0: impl Fn(f64) -> f64,
    profile: &ProfilePair,
    p: f64,
    m: usize,
    obs_times: &[f64],
    opts: SolveOptions,
) -> Result<Solution> {
    let field = DensityField::from_profile(u0, profile, p, m)?;
    solve_from(field, obs_times, opts)
}

pub fn solve_from(mut field: DensityField, obs_times: &[f64], opts: SolveOptions) -> Result<Solution> {
    if !(opts.cfl_factor > 0.0 && opts.cfl_factor <= 1.0) {
        return Err(invalid(format!("cfl factor {} must lie in (0, 1]", opts.cfl_factor)));
    }
    if obs_times.iter().any(|&t| !(t >= 0.0)) || obs_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("observation times must be nonnegative and nondecreasing"));
    }
    let limit = field.cfl_limit();
    let nominal = if limit.is_finite() {
        opts.cfl_factor * limit
    } else {
        // no transport: the split relaxation is exact for any step
        obs_times.last().copied().unwrap_or(0.0).max(1.0)
    };
    let mut stepper = Stepper::new(field.m);
    let mut times = vec![field.time];
    let mut values = vec![field.u.clone()];
    let mut observed = Vec::with_capacity(obs_times.len());
    let mut steps = 0;
    for &target in obs_times {
        loop {
            let remaining = target - field.time;
            // absorb round-off so the last step does not become a sliver
            if remaining <= 1e-12 * target.max(1.0) {
                field.time = target;
                break;
            }
            let dt = if remaining <= nominal * (1.0 + 1e-9) {
                remaining.min(limit)
            } else {
                nominal
            };
            stepper.step(&mut field, dt)?;
            steps += 1;
            if opts.record_every_step {
                times.push(field.time);
                values.push(field.u.clone());
            }
        }
        if !opts.record_every_step || *times.last().unwrap() != target {
            if times.last() == Some(&target) {
                *values.last_mut().unwrap() = field.u.clone();
            } else {
                times.push(target);
                values.push(field.u.clone());
            }
        } else {
            *times.last_mut().unwrap() = target;
        }
        observed.push(times.len() - 1);
    }
    Ok(Solution {
        field: SpaceTimeField::new(field.grid(), times, values)?,
        observed,
        vbar: field.vbar,
        rhobar: field.rhobar,
        p: field.p,
        steps,
    })
}

/// Entropy solution of the Riemann problem for `V ≡ 0`, jump at `x0`.
pub fn riemann_exact(ul: f64, ur: f64, p: f64, t: f64, x: f64, x0: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid(format!("time t = {t} must be positive")));
    }
    check_unit("left state", ul)?;
    check_unit("right state", ur)?;
    if !(0.5..=1.0).contains(&p) {
        return Err(invalid(format!("asymmetry p = {p} must lie in [1/2, 1]")));
    }
    let a = 2.0 * p - 1.0;
    let xi = (x - x0) / t;
    Ok(if ul < ur || a == 0.0 {
        let speed = a * (1.0 - ul - ur);
        if xi < speed {
            ul
        } else {
            ur
        }
    } else if ul == ur || xi <= flux_derivative(ul, p) {
        ul
    } else if xi >= flux_derivative(ur, p) {
        ur
    } else {
        0.5 * (1.0 - xi / a)
    })
}

/// Cell averages of [`riemann_exact`] on a uniform `m`-cell grid of `[0, 1]`,
/// each from `samples` midpoint evaluations.
pub fn riemann_cell_averages(ul: f64, ur: f64, p: f64, t: f64, x0: f64, m: usize, samples: usize) -> Result<Vec<f64>> {
    let grid = UniformGrid::unit(m);
    (0..m)
        .map(|j| {
            let mut acc = 0.0;
            for s in 0..samples {
                let x = grid.left(j) + (s as f64 + 0.5) * grid.dx / samples as f64;
                acc += riemann_exact(ul, ur, p, t, x, x0)?;
            }
            Ok(acc / samples as f64)
        })
        .collect()
}

/// An entropy `f` with its flux `q`, `q′ = J′f′`.
pub trait EntropyPair {
    fn f(&self, u: f64) -> f64;
    fn f_prime(&self, u: f64) -> f64;
    fn q(&self, u: f64) -> f64;
}

impl EntropyPair for EntropyFluxPair {
    fn f(&self, u: f64) -> f64 {
        EntropyFluxPair::f(self, u)
    }

    fn f_prime(&self, u: f64) -> f64 {
        EntropyFluxPair::f_prime(self, u)
    }

    fn q(&self, u: f64) -> f64 {
        EntropyFluxPair::q(self, u)
    }
}

/// Convex entropies with closed-form fluxes `q′ = J′f′`, normalised so
/// that `q` vanishes at the entropy's centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntropyKind {
    /// `f = √((u − k)² + δ²) − δ`.
    SmoothedKruzhkov { k: f64, delta: f64 },
    /// `f = (u − k)²/2`.
    Quadratic { k: f64 },
    /// `f = a·u`.
    Linear { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyFluxPair {
    pub kind: EntropyKind,
    pub p: f64,
}

pub fn kruzhkov_pair(k: f64, delta: f64, p: f64) -> Result<EntropyFluxPair> {
    check_unit("entropy centre", k)?;
    if !(delta > 0.0) {
        return Err(invalid(format!("smoothing {delta} must be positive")));
    }
    Ok(EntropyFluxPair {
        kind: EntropyKind::SmoothedKruzhkov { k, delta },
        p,
    })
}

impl EntropyFluxPair {
    pub fn quadratic(k: f64, p: f64) -> Self {
        Self {
            kind: EntropyKind::Quadratic { k },
            p,
        }
    }

    pub fn linear(a: f64, p: f64) -> Self {
        Self {
            kind: EntropyKind::Linear { a },
            p,
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        match self.kind {
            EntropyKind::SmoothedKruzhkov { k, delta } => (u - k).hypot(delta) - delta,
            EntropyKind::Quadratic { k } => 0.5 * (u - k) * (u - k),
            EntropyKind::Linear { a } => a * u,
        }
    }

    pub fn f_prime(&self, u: f64) -> f64 {
        match self.kind {
            EntropyKind::SmoothedKruzhkov { k, delta } => (u - k) / (u - k).hypot(delta),
            EntropyKind::Quadratic { k } => u - k,
            EntropyKind::Linear { a } => a,
        }
    }

    pub fn f_second(&self, u: f64) -> f64 {
        match self.kind {
            EntropyKind::SmoothedKruzhkov { k, delta } => {
                let r = (u - k).hypot(delta);
                delta * delta / (r * r * r)
            }
            EntropyKind::Quadratic { .. } => 1.0,
            EntropyKind::Linear { .. } => 0.0,
        }
    }

    pub fn q(&self, u: f64) -> f64 {
        let a = 2.0 * self.p - 1.0;
        match self.kind {
            EntropyKind::SmoothedKruzhkov { k, delta } => {
                // ∫ (1 − 2k − 2w)·w/R dw with w = s − k, R = √(w² + δ²)
                let w = u - k;
                let r = w.hypot(delta);
                let d2 = delta * delta;
                a * ((1.0 - 2.0 * k) * (r - delta) - (w * r - d2 * (w / delta).asinh()))
            }
            EntropyKind::Quadratic { k } => {
                // ∫ (1 − 2k − 2w)·w dw
                let w = u - k;
                a * ((1.0 - 2.0 * k) * w * w / 2.0 - 2.0 * w * w * w / 3.0)
            }
            EntropyKind::Linear { a: slope } => slope * flux_j(u, self.p),
        }
    }
}
