//! Functionals of density fields and trajectories: entropy production and
//! residuals, the energy functional, block residuals and L¹ distances.

use serde::{Deserialize, Serialize};

use crate::coarsegrain::{block_averages_in, trapezoid_until};
use crate::error::{invalid, Error, Result};
use crate::field::{SpaceTimeField, UniformGrid};
use crate::microsim::{Configuration, Trajectory};
use crate::pde_solver::{flux_j, EntropyPair};

/// `b(s) = (1 − s²)⁴` on `|s| < 1`, zero outside.
#[inline]
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - s * s;
        let w2 = w * w;
        w2 * w2
    }
}

#[inline]
fn bump_prime(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - s * s;
        -8.0 * s * w * w * w
    }
}

/// `∫ b = 256/315`.
pub const BUMP_INTEGRAL: f64 = 256.0 / 315.0;

/// `a·b((t − t0)/rt)·b((x − x0)/rx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub t0: f64,
    pub rt: f64,
    pub x0: f64,
    pub rx: f64,
}

impl Bump {
    pub fn new(amplitude: f64, t0: f64, rt: f64, x0: f64, rx: f64) -> Result<Self> {
        if !(rt > 0.0 && rx > 0.0) {
            return Err(invalid("bump radii must be positive"));
        }
        Ok(Self {
            amplitude,
            t0,
            rt,
            x0,
            rx,
        })
    }
}

/// A finite linear combination of tensor bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub bumps: Vec<Bump>,
}

/// Support box `[t_lo, t_hi] × [x_lo, x_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBox {
    pub t: (f64, f64),
    pub x: (f64, f64),
}

impl TestFunction {
    pub fn zero() -> Self {
        Self { bumps: Vec::new() }
    }

    pub fn single(b: Bump) -> Self {
        Self { bumps: vec![b] }
    }

    /// `a·self + c·other`.
    pub fn combine(&self, a: f64, other: &TestFunction, c: f64) -> Self {
        let scale = |s: f64| {
            move |b: &Bump| Bump {
                amplitude: s * b.amplitude,
                ..*b
            }
        };
        Self {
            bumps: self
                .bumps
                .iter()
                .map(scale(a))
                .chain(other.bumps.iter().map(scale(c)))
                .collect(),
        }
    }

    pub fn is_nonneg(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude >= 0.0)
    }

    pub fn support(&self) -> Option<SupportBox> {
        let live: Vec<&Bump> = self.bumps.iter().filter(|b| b.amplitude != 0.0).collect();
        if live.is_empty() {
            return None;
        }
        let fold = |f: &dyn Fn(&Bump) -> f64, min: bool| {
            live.iter()
                .map(|b| f(b))
                .fold(if min { f64::INFINITY } else { f64::NEG_INFINITY }, |a, v| {
                    if min {
                        a.min(v)
                    } else {
                        a.max(v)
                    }
                })
        };
        Some(SupportBox {
            t: (fold(&|b| b.t0 - b.rt, true), fold(&|b| b.t0 + b.rt, false)),
            x: (fold(&|b| b.x0 - b.rx, true), fold(&|b| b.x0 + b.rx, false)),
        })
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.amplitude * bump((t - b.t0) / b.rt) * bump((x - b.x0) / b.rx))
            .sum()
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.amplitude * bump_prime((t - b.t0) / b.rt) / b.rt * bump((x - b.x0) / b.rx))
            .sum()
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.amplitude * bump((t - b.t0) / b.rt) * bump_prime((x - b.x0) / b.rx) / b.rx)
            .sum()
    }
}

/// Cell data of the source `V̄(u − ρ̄)` on a field's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSource {
    pub vbar: Vec<f64>,
    pub rhobar: Vec<f64>,
}

/// Cell range and interval range that meet the support of `phi`; errors
/// when the support leaves the field's space-time domain. Support before
/// the first sample is ignored: it carries the initial-data term.
fn window(field: &SpaceTimeField, phi: &TestFunction) -> Result<Option<(usize, usize, usize, usize)>> {
    let Some(sup) = phi.support() else {
        return Ok(None);
    };
    let g = field.grid;
    let times = &field.times;
    if times.len() < 2 {
        return Err(invalid("field needs at least two time samples"));
    }
    let slack = 1e-12;
    if sup.x.0 < g.origin - slack || sup.x.1 > g.end() + slack || sup.t.1 > times[times.len() - 1] + slack {
        return Err(Error::Incompatible(format!(
            "test function support {sup:?} escapes the field domain [{}, {}] x [{}, {}]",
            times[0],
            times[times.len() - 1],
            g.origin,
            g.end()
        )));
    }
    let j_lo = (((sup.x.0 - g.origin) / g.dx).floor().max(0.0)) as usize;
    let j_hi = ((((sup.x.1 - g.origin) / g.dx).ceil()) as usize).min(g.cells);
    let n_lo = times.partition_point(|&t| t <= sup.t.0).saturating_sub(1);
    let n_hi = times.partition_point(|&t| t < sup.t.1).min(times.len() - 1);
    Ok(Some((j_lo, j_hi, n_lo, n_hi)))
}

/// `X = −∬[∂ₜφ·f(u) + ∂ₓφ·q(u)]`, with the field piecewise constant on
/// `[t_n, t_{n+1}) × cell_j`. The time derivative is integrated exactly in
/// time at cell centres, the space derivative exactly in space at interval
/// midpoints, so constant fields give zero up to round-off.
pub fn entropy_production(field: &SpaceTimeField, pair: &impl EntropyPair, phi: &TestFunction) -> Result<f64> {
    let Some((j_lo, j_hi, n_lo, n_hi)) = window(field, phi)? else {
        return Ok(0.0);
    };
    let g = field.grid;
    let mut total = 0.0;
    for n in n_lo..n_hi {
        let (t0, t1) = (field.times[n], field.times[n + 1]);
        let tm = 0.5 * (t0 + t1);
        let u = &field.values[n];
        for j in j_lo..j_hi {
            let x = g.center(j);
            let time_part = pair.f(u[j]) * g.dx * (phi.value(t1, x) - phi.value(t0, x));
            let space_part = pair.q(u[j]) * (t1 - t0) * (phi.value(tm, g.left(j + 1)) - phi.value(tm, g.left(j)));
            total += time_part + space_part;
        }
    }
    Ok(-total)
}

/// `∫f(u₀)φ(0,·) + ∬[f∂ₜφ + q∂ₓφ] − ∬f′(u)V̄(u − ρ̄)φ`; nonnegative for
/// entropy solutions up to discretisation error.
pub fn entropy_residual(
    field: &SpaceTimeField,
    pair: &impl EntropyPair,
    phi: &TestFunction,
    u0: &[f64],
    source: &CellSource,
) -> Result<f64> {
    let g = field.grid;
    if u0.len() != g.cells || source.vbar.len() != g.cells || source.rhobar.len() != g.cells {
        return Err(Error::Incompatible("initial data or source off the field grid".into()));
    }
    let production = entropy_production(field, pair, phi)?;
    let Some((j_lo, j_hi, n_lo, n_hi)) = window(field, phi)? else {
        return Ok(0.0);
    };
    let t_start = field.times[0];
    let initial: f64 = (j_lo..j_hi)
        .map(|j| pair.f(u0[j]) * phi.value(t_start, g.center(j)) * g.dx)
        .sum();
    let mut relax = 0.0;
    for n in n_lo..n_hi {
        let (t0, t1) = (field.times[n], field.times[n + 1]);
        let tm = 0.5 * (t0 + t1);
        let u = &field.values[n];
        for j in j_lo..j_hi {
            let w = phi.value(tm, g.center(j));
            if w == 0.0 {
                continue;
            }
            let v = source.vbar[j];
            if !v.is_finite() {
                return Err(Error::Incompatible(format!(
                    "test function reaches cell {j} where the potential is not integrable"
                )));
            }
            relax += pair.f_prime(u[j]) * v * (u[j] - source.rhobar[j]) * w * g.dx * (t1 - t0);
        }
    }
    Ok(initial - production - relax)
}

/// `∬ V̄(u − ρ̄)²` over `[t_0, T]`, the state after each interval standing
/// for that interval. Cells with `V̄ = +∞` contribute zero when pinned at
/// `ρ̄` and make the value infinite otherwise.
pub fn energy_functional(field: &SpaceTimeField, source: &CellSource, t_end: f64) -> Result<f64> {
    let g = field.grid;
    if source.vbar.len() != g.cells {
        return Err(Error::Incompatible("source off the field grid".into()));
    }
    let times = &field.times;
    if times.is_empty() || *times.last().unwrap() < t_end - 1e-12 {
        return Err(invalid(format!("field does not reach T = {t_end}")));
    }
    let mut total = 0.0;
    for n in 0..times.len() - 1 {
        let (t0, t1) = (times[n], times[n + 1].min(t_end));
        if t1 <= t0 {
            break;
        }
        let u = &field.values[n + 1];
        let mut slice = 0.0;
        for j in 0..g.cells {
            let d = u[j] - source.rhobar[j];
            let v = source.vbar[j];
            if d == 0.0 {
                continue;
            }
            slice += v * d * d;
        }
        total += slice * g.dx * (t1 - t0);
    }
    Ok(total)
}

/// `Σ_{i=K}^{N−K} (Ĵ_i − J(η̂_i))²` for one configuration, with
/// `J_i = (2p − 1)η_i(1 − η_{i+1})`.
pub fn one_block_sum(config: &Configuration, k: usize, p: f64) -> f64 {
    let sites = config.sites();
    let n = config.n();
    let current: Vec<u8> = sites.windows(2).map(|w| w[0] & (1 - w[1])).collect();
    let a = 2.0 * p - 1.0;
    let eta = block_averages_in(sites, k, k, n - k);
    let jhat = block_averages_in(&current, k, k, n - k);
    eta.iter()
        .zip(&jhat)
        .map(|(&e, &j)| {
            let d = a * j - flux_j(e, p);
            d * d
        })
        .sum()
}

/// `Σ_{i=K}^{N−K} (η̂_{i+1} − η̂_i)²` for one configuration.
pub fn h1_sum(config: &Configuration, k: usize) -> f64 {
    let n = config.n();
    let eta = block_averages_in(config.sites(), k, k, n - k + 1);
    eta.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

fn check_block(n: usize, k: usize) -> Result<()> {
    if k == 0 || 2 * k > n {
        return Err(invalid(format!("block half-width K = {k} does not fit N = {n}")));
    }
    Ok(())
}

fn time_integral(trajectory: &Trajectory, t: f64, per_snapshot: impl Fn(&Configuration) -> f64) -> Result<f64> {
    let times = &trajectory.times;
    if times.is_empty() || t > *times.last().unwrap() + 1e-12 || t < times[0] {
        return Err(invalid(format!("horizon T = {t} not covered by the trajectory")));
    }
    let series: Vec<(f64, f64)> = times
        .iter()
        .zip(&trajectory.snapshots)
        .map(|(&s, c)| (s, per_snapshot(c)))
        .collect();
    Ok(trapezoid_until(&series, t).0)
}

/// `∫₀ᵀ Σ (Ĵ_i − J(η̂_i))² dt` by the trapezoid rule over the snapshots.
pub fn one_block_residual(trajectory: &Trajectory, k: usize, p: f64, t: f64) -> Result<f64> {
    check_block(trajectory.n(), k)?;
    time_integral(trajectory, t, |c| one_block_sum(c, k, p))
}

/// `∫₀ᵀ Σ (∇η̂_i)² dt` by the trapezoid rule over the snapshots.
pub fn h1_residual(trajectory: &Trajectory, k: usize, t: f64) -> Result<f64> {
    check_block(trajectory.n(), k)?;
    time_integral(trajectory, t, |c| h1_sum(c, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Distance {
    pub per_time: Vec<f64>,
    pub mean: f64,
}

/// `Σ|a − b|·dx` on `target` at each common time, and its average.
pub fn l1_distance(a: &SpaceTimeField, b: &SpaceTimeField, target: UniformGrid) -> Result<L1Distance> {
    if a.times.len() != b.times.len()
        || a.times
            .iter()
            .zip(&b.times)
            .any(|(s, t)| (s - t).abs() > 1e-9 * s.abs().max(1.0))
    {
        return Err(Error::Incompatible("fields sampled at different times".into()));
    }
    let ra = a.restrict_to(target)?;
    let rb = b.restrict_to(target)?;
    let per_time: Vec<f64> = ra
        .values
        .iter()
        .zip(&rb.values)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() * target.dx)
        .collect();
    let mean = if per_time.is_empty() {
        0.0
    } else {
        per_time.iter().sum::<f64>() / per_time.len() as f64
    };
    Ok(L1Distance { per_time, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticEntry {
    pub name: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub passed: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub grid: Option<UniformGrid>,
    pub entries: Vec<DiagnosticEntry>,
}

impl DiagnosticsReport {
    pub fn push(&mut self, name: &str, value: f64, tolerance: Option<f64>, passed: Option<bool>) {
        self.entries.push(DiagnosticEntry {
            name: name.to_string(),
            value,
            tolerance,
            passed,
            note: None,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed != Some(false))
    }

    pub fn to_json(&self) -> Result<String> {
        // serde_json writes non-finite floats as null, which is what we want
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::coarsegrain::block_average;
    use crate::microsim::EventCounters;
    use crate::pde_solver::{kruzhkov_pair, EntropyFluxPair};

    fn uniform_times(t: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|n| t * n as f64 / steps as f64).collect()
    }

    fn field_of(m: usize, times: Vec<f64>, u: impl Fn(f64, f64) -> f64) -> SpaceTimeField {
        let g = UniformGrid::unit(m);
        let values = times
            .iter()
            .map(|&t| (0..m).map(|j| u(t, g.center(j))).collect())
            .collect();
        SpaceTimeField::new(g, times, values).unwrap()
    }

    fn central_bump() -> TestFunction {
        TestFunction::single(Bump::new(1.0, 0.5, 0.3, 0.5, 0.2).unwrap())
    }

    fn frozen(c: Configuration, times: &[f64]) -> Trajectory {
        Trajectory {
            times: times.to_vec(),
            snapshots: vec![c; times.len()],
            counters: EventCounters::default(),
            events: 0,
        }
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let phi = TestFunction::single(Bump::new(1.3, 0.4, 0.2, 0.6, 0.1).unwrap());
        let h = 1e-6;
        for (t, x) in [(0.45, 0.62), (0.3, 0.55), (0.52, 0.67)] {
            let dt = (phi.value(t + h, x) - phi.value(t - h, x)) / (2.0 * h);
            let dx = (phi.value(t, x + h) - phi.value(t, x - h)) / (2.0 * h);
            assert!((dt - phi.dt(t, x)).abs() < 1e-6);
            assert!((dx - phi.dx(t, x)).abs() < 1e-6);
        }
        assert_eq!(phi.value(0.61, 0.6), 0.0);
        assert_eq!(phi.value(0.4, 0.71), 0.0);
    }

    #[test]
    fn production_vanishes_on_constants_and_zero_phi() {
        let f = field_of(200, uniform_times(1.0, 50), |_, _| 0.37);
        let pair = kruzhkov_pair(0.5, 1e-3, 1.0).unwrap();
        assert!(entropy_production(&f, &pair, &central_bump()).unwrap().abs() < 1e-14);
        assert_eq!(entropy_production(&f, &pair, &TestFunction::zero()).unwrap(), 0.0);
    }

    #[test]
    fn stationary_shock_production_matches_closed_form() {
        let f = field_of(400, uniform_times(1.0, 200), |_, x| if x < 0.5 { 0.2 } else { 0.8 });
        let phi = central_bump();
        let pair = kruzhkov_pair(0.5, 1e-3, 1.0).unwrap();
        let x = entropy_production(&f, &pair, &phi).unwrap();
        // X = (q(u_R) − q(u_L))·∫φ(t, 1/2) dt, sharp value −0.18·0.3·256/315
        let exact = (pair.q(0.8) - pair.q(0.2)) * 0.3 * BUMP_INTEGRAL;
        assert!((x - exact).abs() < 1e-4, "{x} vs {exact}");
        assert!((exact + 0.18 * 0.3 * BUMP_INTEGRAL).abs() < 2e-3);
        assert!(x < 0.0);
    }

    #[test]
    fn support_outside_field_is_rejected() {
        let f = field_of(50, uniform_times(0.5, 10), |_, _| 0.5);
        let pair = EntropyFluxPair::quadratic(0.5, 1.0);
        assert!(entropy_production(&f, &pair, &central_bump()).is_err());
    }

    #[test]
    fn residual_of_stationary_constant_is_zero() {
        let m = 100;
        let c = 0.3;
        let f = field_of(m, uniform_times(1.0, 40), |_, _| c);
        let source = CellSource {
            vbar: vec![5.0; m],
            rhobar: vec![c; m],
        };
        let pair = kruzhkov_pair(c, 1e-3, 1.0).unwrap();
        let r = entropy_residual(&f, &pair, &central_bump(), &vec![c; m], &source).unwrap();
        assert!(r.abs() < 1e-14);
        let r0 = entropy_residual(&f, &pair, &TestFunction::zero(), &vec![c; m], &source).unwrap();
        assert_eq!(r0, 0.0);
    }

    struct Mix<'a>(f64, &'a EntropyFluxPair, f64, &'a EntropyFluxPair);

    impl EntropyPair for Mix<'_> {
        fn f(&self, u: f64) -> f64 {
            self.0 * self.1.f(u) + self.2 * self.3.f(u)
        }
        fn f_prime(&self, u: f64) -> f64 {
            self.0 * self.1.f_prime(u) + self.2 * self.3.f_prime(u)
        }
        fn q(&self, u: f64) -> f64 {
            self.0 * self.1.q(u) + self.2 * self.3.q(u)
        }
    }

    #[test]
    fn residual_is_linear_in_phi_and_entropy() {
        let m = 120;
        let f = field_of(m, uniform_times(1.0, 60), |t, x| 0.5 + 0.3 * (6.0 * x + 2.0 * t).sin());
        let source = CellSource {
            vbar: (0..m).map(|j| 1.0 + j as f64 / 10.0).collect(),
            rhobar: vec![0.4; m],
        };
        let u0 = f.values[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p1 = kruzhkov_pair(0.3, 1e-2, 1.0).unwrap();
        let p2 = EntropyFluxPair::quadratic(0.6, 1.0);
        let phi1 = TestFunction::single(Bump::new(1.0, 0.4, 0.2, 0.4, 0.15).unwrap());
        let phi2 = TestFunction::single(Bump::new(2.0, 0.6, 0.3, 0.6, 0.2).unwrap());
        let res = |pair: &dyn Fn(f64) -> (f64, f64, f64), phi: &TestFunction| {
            struct P<'a>(&'a dyn Fn(f64) -> (f64, f64, f64));
            impl EntropyPair for P<'_> {
                fn f(&self, u: f64) -> f64 {
                    (self.0)(u).0
                }
                fn f_prime(&self, u: f64) -> f64 {
                    (self.0)(u).1
                }
                fn q(&self, u: f64) -> f64 {
                    (self.0)(u).2
                }
            }
            entropy_residual(&f, &P(pair), phi, &u0, &source).unwrap()
        };
        let e1 = |u: f64| (p1.f(u), p1.f_prime(u), p1.q(u));
        let e2 = |u: f64| (p2.f(u), p2.f_prime(u), p2.q(u));
        for _ in 0..5 {
            let (a, c): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = res(&e1, &phi1.combine(a, &phi2, c));
            let rhs = a * res(&e1, &phi1) + c * res(&e1, &phi2);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
            let mix = Mix(a, &p1, c, &p2);
            let lhs = entropy_residual(&f, &mix, &phi1, &u0, &source).unwrap();
            let rhs = a * res(&e1, &phi1) + c * res(&e2, &phi1);
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn exact_rarefaction_satisfies_the_inequality() {
        // fan from x0 = 0.3 at t = 0 sampled on a fine grid, V ≡ 0
        let m = 800;
        let times = uniform_times(0.4, 400);
        let f = field_of(m, times, |t, x| {
            if t == 0.0 {
                if x < 0.3 {
                    0.9
                } else {
                    0.1
                }
            } else {
                crate::pde_solver::riemann_exact(0.9, 0.1, 1.0, t, x, 0.3).unwrap()
            }
        });
        let source = CellSource {
            vbar: vec![0.0; m],
            rhobar: vec![0.5; m],
        };
        let u0 = f.values[0].clone();
        let phi = TestFunction::single(Bump::new(1.0, 0.2, 0.15, 0.35, 0.25).unwrap());
        let tol = 5.0 * (1.0 / m as f64 + 1e-3);
        for i in 0..10 {
            let k = 0.05 + 0.1 * i as f64;
            let pair = kruzhkov_pair(k, 1e-3, 1.0).unwrap();
            let r = entropy_residual(&f, &pair, &phi, &u0, &source).unwrap();
            assert!(r >= -tol, "k = {k}: {r}");
        }
    }

    #[test]
    fn energy_examples() {
        let m = 40;
        let f = field_of(m, uniform_times(1.0, 10), |_, _| 0.6);
        let pinned = CellSource {
            vbar: vec![2.0; m],
            rhobar: vec![0.6; m],
        };
        assert_eq!(energy_functional(&f, &pinned, 1.0).unwrap(), 0.0);
        let off = CellSource {
            vbar: vec![2.0; m],
            rhobar: vec![0.5; m],
        };
        assert!((energy_functional(&f, &off, 1.0).unwrap() - 0.02).abs() < 1e-14);
        let mut inf = pinned.clone();
        inf.vbar[0] = f64::INFINITY;
        assert_eq!(energy_functional(&f, &inf, 1.0).unwrap(), 0.0);
        let mut inf_off = off.clone();
        inf_off.vbar[0] = f64::INFINITY;
        assert_eq!(energy_functional(&f, &inf_off, 1.0).unwrap(), f64::INFINITY);
        assert!(energy_functional(&f, &pinned, 2.0).is_err());
    }

    #[test]
    fn energy_depends_on_squared_deviation_only() {
        let m = 64;
        let rho: Vec<f64> = (0..m).map(|j| 0.3 + 0.4 * j as f64 / m as f64).collect();
        let dev = |j: usize, t: f64| 0.1 * ((j as f64) * 0.7 + t).sin();
        let times = uniform_times(1.0, 20);
        let build = |sign: f64| {
            let values = times
                .iter()
                .map(|&t| (0..m).map(|j| rho[j] + sign * dev(j, t)).collect())
                .collect();
            SpaceTimeField::new(UniformGrid::unit(m), times.clone(), values).unwrap()
        };
        let source = CellSource {
            vbar: (0..m).map(|j| 1.0 + j as f64).collect(),
            rhobar: rho.clone(),
        };
        let a = energy_functional(&build(1.0), &source, 1.0).unwrap();
        let b = energy_functional(&build(-1.0), &source, 1.0).unwrap();
        assert!((a - b).abs() < 1e-13 * a);
    }

    #[test]
    fn block_residuals_of_extreme_configs_vanish() {
        let times = [0.0, 0.5, 1.0];
        for c in [Configuration::filled(100), Configuration::empty(100)] {
            let t = frozen(c, &times);
            assert_eq!(one_block_residual(&t, 10, 1.0, 1.0).unwrap(), 0.0);
            assert_eq!(h1_residual(&t, 10, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn h1_of_alternating_config() {
        let bits: Vec<u8> = (0..=40).map(|i| (i % 2) as u8).collect();
        let c = Configuration::from_bits(&bits).unwrap();
        // K = 2: weights 1/4, 1/2, 1/4 flatten the pattern to 1/2
        assert_eq!(h1_sum(&c, 2), 0.0);
        // K = 3: η̂ alternates 5/9 and 4/9, each of the N − 2K + 1 differences is ±1/9
        let expect = (40 - 6 + 1) as f64 / 81.0;
        assert!((h1_sum(&c, 3) - expect).abs() < 1e-14);
        let hat = |i: usize| {
            let w = [1.0, 2.0, 3.0, 2.0, 1.0];
            (0..5).map(|d| w[d] * bits[i + d - 2] as f64).sum::<f64>() / 9.0
        };
        assert_eq!(hat(10), block_average(&c, 10, 3).unwrap());
        let direct: f64 = (3..=37).map(|i| (hat(i + 1) - hat(i)).powi(2)).sum();
        assert!((direct - expect).abs() < 1e-14);
    }

    fn naive_one_block(c: &Configuration, k: usize, p: f64) -> f64 {
        let s = c.sites();
        let n = c.n();
        let a = 2.0 * p - 1.0;
        let kk = k as isize;
        (k..=n - k)
            .map(|i| {
                let mut eta = 0.0;
                let mut cur = 0.0;
                for j in -(kk - 1)..kk {
                    let w = (kk - j.abs()) as f64 / (kk * kk) as f64;
                    let site = (i as isize - j) as usize;
                    eta += w * s[site] as f64;
                    cur += w * a * (s[site] * (1 - s[site + 1])) as f64;
                }
                (cur - a * eta * (1.0 - eta)).powi(2)
            })
            .sum()
    }

    #[test]
    fn one_block_matches_resampling_oracle() {
        let (n, k) = (2000, 103);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sample = |rng: &mut ChaCha8Rng| {
            let bits: Vec<u8> = (0..=n).map(|_| rng.gen_range(0..2)).collect();
            Configuration::from_bits(&bits).unwrap()
        };
        // same configuration, two implementations
        for _ in 0..5 {
            let c = sample(&mut rng);
            let (a, b) = (one_block_sum(&c, k, 0.8), naive_one_block(&c, k, 0.8));
            assert!((a - b).abs() < 1e-10 * b.max(1.0));
        }
        // independent resamples agree in mean
        let stats = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            (m, v / xs.len() as f64)
        };
        let fast: Vec<f64> = (0..1000).map(|_| one_block_sum(&sample(&mut rng), k, 1.0)).collect();
        let slow: Vec<f64> = (0..200).map(|_| naive_one_block(&sample(&mut rng), k, 1.0)).collect();
        let ((mf, vf), (ms, vs)) = (stats(&fast), stats(&slow));
        assert!((mf - ms).abs() < 4.0 * (vf + vs).sqrt(), "{mf} vs {ms}");
        // per-site value is of the order 1/K
        let per_site = mf / (n - 2 * k + 1) as f64;
        assert!(per_site > 0.01 / k as f64 && per_site < 1.0 / k as f64, "{per_site}");
    }

    #[test]
    fn h1_matches_resampling_oracle() {
        // Bernoulli(1/2): E(∇η̂)² = Σ_j (w_{j} − w_{j−1})²/4 = 2(K−1)/K⁴·... computed directly
        let (n, k) = (2000, 103);
        let w = crate::coarsegrain::triangular_weights(k);
        let mut diff = 0.0;
        for idx in 0..=w.len() {
            let a = w.get(idx).copied().unwrap_or(0.0);
            let b = if idx == 0 { 0.0 } else { w[idx - 1] };
            diff += (a - b).powi(2);
        }
        let exact = diff / 4.0 * (n - 2 * k + 1) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..1000)
            .map(|_| {
                let bits: Vec<u8> = (0..=n).map(|_| rng.gen_range(0..2)).collect();
                h1_sum(&Configuration::from_bits(&bits).unwrap(), k)
            })
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 999.0 / 1000.0).sqrt();
        assert!((m - exact).abs() < 4.0 * sd, "{m} vs {exact} ± {sd}");
    }

    #[test]
    fn l1_examples() {
        let times = vec![0.1, 0.2];
        let a = field_of(100, times.clone(), |_, _| 0.4);
        assert_eq!(l1_distance(&a, &a, UniformGrid::unit(50)).unwrap().mean, 0.0);
        let band = UniformGrid {
            origin: 0.1,
            dx: 0.01,
            cells: 80,
        };
        let b = field_of(100, times, |_, x| if x < 0.5 { 0.5 } else { 0.4 });
        let d = l1_distance(&a, &b, band).unwrap();
        assert!((d.mean - 0.05 * 0.8).abs() < 1e-14);
        let c = field_of(100, vec![0.1, 0.3], |_, _| 0.4);
        assert!(l1_distance(&a, &c, band).is_err());
    }

    #[test]
    fn report_serialises_infinite_values() {
        let mut r = DiagnosticsReport::default();
        r.push("energy", f64::INFINITY, None, Some(false));
        r.push("l1", 0.1, Some(0.2), Some(true));
        assert!(!r.all_passed());
        let json = r.to_json().unwrap();
        assert!(json.contains("null"));
    }
}
