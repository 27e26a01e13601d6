use rand::{Rng, RngCore};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{Configuration, RateTree, ScalingScheme};
use crate::error::{invalid, Error, Result};
use crate::profiles::LatticeProfile;

/// Event channel. Channels are laid out as `Flip(i) ↦ 2i`, `Swap(i) ↦ 2i+1`
/// so that every event re-prices one contiguous run of leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Exchange of sites `i` and `i + 1`.
    Swap(usize),
    /// Creation or annihilation at site `i`.
    Flip(usize),
}

impl Channel {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Channel::Flip(i) => 2 * i,
            Channel::Swap(i) => 2 * i + 1,
        }
    }

    #[inline]
    pub fn from_index(idx: usize) -> Self {
        if idx % 2 == 0 {
            Channel::Flip(idx / 2)
        } else {
            Channel::Swap(idx / 2)
        }
    }

    pub fn count(n: usize) -> usize {
        2 * n + 1
    }

    /// Channels whose rate can change when `self` fires, as an index range.
    #[inline]
    pub fn affected(self, n: usize) -> std::ops::RangeInclusive<usize> {
        let (lo, hi) = match self {
            Channel::Swap(i) => ((2 * i).saturating_sub(1), 2 * i + 3),
            Channel::Flip(i) => ((2 * i).saturating_sub(1), 2 * i + 1),
        };
        lo..=hi.min(2 * n)
    }
}

/// Precomputed rates of every channel class.
#[derive(Debug, Clone)]
pub struct Dynamics {
    n: usize,
    /// `N(p + σ/2)`: particle at `i`, hole at `i + 1`.
    swap_forward: f64,
    /// `N(1 − p + σ/2)`: hole at `i`, particle at `i + 1`.
    swap_backward: f64,
    create: Vec<f64>,
    annihilate: Vec<f64>,
}

impl Dynamics {
    pub fn new(scheme: &ScalingScheme, lattice: &LatticeProfile) -> Result<Self> {
        let n = scheme.n;
        if lattice.n() != n {
            return Err(invalid(format!(
                "lattice profile has N = {}, scheme has N = {n}",
                lattice.n()
            )));
        }
        let nf = n as f64;
        let half_sigma = scheme.sigma / 2.0;
        let mut create = vec![0.0; n + 1];
        let mut annihilate = vec![0.0; n + 1];
        for i in 1..n {
            let (v, rho) = (lattice.potential[i], lattice.density[i]);
            // N · (1/N) · c_{i,G}
            create[i] = v * rho;
            annihilate[i] = v * (1.0 - rho);
        }
        let b = scheme.boundary;
        create[0] = nf * b.in_left;
        annihilate[0] = nf * b.out_left;
        create[n] = nf * b.in_right;
        annihilate[n] = nf * b.out_right;
        Ok(Self {
            n,
            swap_forward: nf * (scheme.p + half_sigma),
            swap_backward: nf * ((1.0 - scheme.p) + half_sigma),
            create,
            annihilate,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn rate(&self, config: &Configuration, idx: usize) -> f64 {
        let i = idx / 2;
        if idx % 2 == 0 {
            if config.get(i) == 0 {
                self.create[i]
            } else {
                self.annihilate[i]
            }
        } else {
            match (config.get(i), config.get(i + 1)) {
                (1, 0) => self.swap_forward,
                (0, 1) => self.swap_backward,
                _ => 0.0,
            }
        }
    }

    pub fn all_rates(&self, config: &Configuration) -> Vec<f64> {
        (0..Channel::count(self.n)).map(|idx| self.rate(config, idx)).collect()
    }
}

/// Rates of every channel in configuration `config`, indexed by
/// [`Channel::index`].
pub fn channel_rates(config: &Configuration, scheme: &ScalingScheme, lattice: &LatticeProfile) -> Result<Vec<f64>> {
    if config.n() != scheme.n {
        return Err(invalid("configuration and scheme disagree on N"));
    }
    Ok(Dynamics::new(scheme, lattice)?.all_rates(config))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub channel: Channel,
    pub mass_delta: i8,
}

/// Per-class event totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub jumps_right: u64,
    pub jumps_left: u64,
    pub created: u64,
    pub annihilated: u64,
    pub entered_left: u64,
    pub exited_left: u64,
    pub entered_right: u64,
    pub exited_right: u64,
}

impl EventCounters {
    pub fn total(&self) -> u64 {
        self.jumps_right
            + self.jumps_left
            + self.created
            + self.annihilated
            + self.entered_left
            + self.exited_left
            + self.entered_right
            + self.exited_right
    }

    /// Net particles gained through flips and reservoirs.
    pub fn net_mass_change(&self) -> i64 {
        (self.created + self.entered_left + self.entered_right) as i64
            - (self.annihilated + self.exited_left + self.exited_right) as i64
    }

    pub fn merge(&mut self, other: &EventCounters) {
        self.jumps_right += other.jumps_right;
        self.jumps_left += other.jumps_left;
        self.created += other.created;
        self.annihilated += other.annihilated;
        self.entered_left += other.entered_left;
        self.exited_left += other.exited_left;
        self.entered_right += other.entered_right;
        self.exited_right += other.exited_right;
    }
}

const NO_BOND: u8 = 0;
const FORWARD: u8 = 1;
const BACKWARD: u8 = 2;

/// Simulation state.
///
/// Swap channels only ever carry one of two nonzero rates, so enabled bonds
/// are kept in two index sets and drawn uniformly within their class. Flip
/// channels are drawn from a [`RateTree`] over the per-site bound
/// `max(creation, annihilation)` and thinned to their current rate; the
/// bounds never change, so flips need no re-pricing at all.
#[derive(Debug, Clone)]
pub struct SimState {
    pub config: Configuration,
    /// Macroscopic time.
    pub time: f64,
    flip_bounds: RateTree,
    forward: Vec<u32>,
    backward: Vec<u32>,
    slot: Vec<u32>,
    class: Vec<u8>,
}

impl SimState {
    fn new(config: Configuration, dynamics: &Dynamics) -> Self {
        let n = config.n();
        let bounds: Vec<f64> = (0..=n)
            .map(|i| dynamics.create[i].max(dynamics.annihilate[i]))
            .collect();
        let mut state = Self {
            config,
            time: 0.0,
            flip_bounds: RateTree::new(&bounds),
            forward: Vec::new(),
            backward: Vec::new(),
            slot: vec![0; n],
            class: vec![NO_BOND; n],
        };
        for b in 0..n {
            state.reclassify(b);
        }
        state
    }

    #[inline]
    fn bond_class(&self, b: usize) -> u8 {
        match (self.config.get(b), self.config.get(b + 1)) {
            (1, 0) => FORWARD,
            (0, 1) => BACKWARD,
            _ => NO_BOND,
        }
    }

    #[inline]
    fn reclassify(&mut self, b: usize) {
        let new = self.bond_class(b);
        let old = self.class[b];
        if new == old {
            return;
        }
        if old != NO_BOND {
            let list = if old == FORWARD {
                &mut self.forward
            } else {
                &mut self.backward
            };
            let at = self.slot[b] as usize;
            let last = list.pop().expect("bond registered in its class");
            if last as usize != b {
                list[at] = last;
                self.slot[last as usize] = at as u32;
            }
        }
        if new != NO_BOND {
            let list = if new == FORWARD {
                &mut self.forward
            } else {
                &mut self.backward
            };
            self.slot[b] = list.len() as u32;
            list.push(b as u32);
        }
        self.class[b] = new;
    }

    /// Bonds with a particle at `i` and a hole at `i + 1`.
    pub fn forward_bonds(&self) -> usize {
        self.forward.len()
    }

    /// Bonds with a hole at `i` and a particle at `i + 1`.
    pub fn backward_bonds(&self) -> usize {
        self.backward.len()
    }

    pub fn flip_bounds(&self) -> &RateTree {
        &self.flip_bounds
    }
}

const AUDIT_PERIOD: u64 = 1 << 16;
const REJECTION_CHECK: u32 = 1 << 12;

/// A single trajectory of the jump process.
pub struct Simulator<R> {
    dynamics: Dynamics,
    state: SimState,
    rng: R,
    counters: EventCounters,
    events: u64,
    rejections_in_a_row: u32,
}

impl<R: RngCore> Simulator<R> {
    pub fn new(initial: Configuration, scheme: &ScalingScheme, lattice: &LatticeProfile, rng: R) -> Result<Self> {
        if initial.n() != scheme.n {
            return Err(invalid("initial configuration and scheme disagree on N"));
        }
        let dynamics = Dynamics::new(scheme, lattice)?;
        Ok(Self::with_dynamics(initial, dynamics, rng))
    }

    pub fn with_dynamics(initial: Configuration, dynamics: Dynamics, rng: R) -> Self {
        let state = SimState::new(initial, &dynamics);
        Self {
            dynamics,
            state,
            rng,
            counters: EventCounters::default(),
            events: 0,
            rejections_in_a_row: 0,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn counters(&self) -> &EventCounters {
        &self.counters
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    #[inline]
    fn class_totals(&self) -> (f64, f64, f64) {
        (
            self.state.forward.len() as f64 * self.dynamics.swap_forward,
            self.state.backward.len() as f64 * self.dynamics.swap_backward,
            self.state.flip_bounds.total(),
        )
    }

    /// Sum of the rates of all enabled channels.
    pub fn total_rate(&self) -> f64 {
        let (f, b, _) = self.class_totals();
        let config = &self.state.config;
        f + b
            + (0..=self.dynamics.n)
                .map(|i| self.dynamics.rate(config, 2 * i))
                .sum::<f64>()
    }

    /// Absolute time of the next proposal, `+∞` when nothing can fire.
    #[inline]
    fn draw_event_time(&mut self) -> f64 {
        let (f, b, g) = self.class_totals();
        let total = f + b + g;
        if total <= 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = self.rng.sample(Exp1);
        self.state.time + e / total
    }

    /// Fires the proposal scheduled at `time`. Returns `None` when a flip
    /// proposal is thinned away; the clock still advances.
    #[inline]
    fn fire_at(&mut self, time: f64) -> Result<Option<EventRecord>> {
        let (fwd, bwd, flips) = self.class_totals();
        let mut target = self.rng.gen::<f64>() * (fwd + bwd + flips);
        self.state.time = time;
        let channel = if target < fwd || (bwd <= 0.0 && flips <= 0.0) {
            let k = ((target / self.dynamics.swap_forward) as usize).min(self.state.forward.len() - 1);
            Channel::Swap(self.state.forward[k] as usize)
        } else {
            target -= fwd;
            if target < bwd || flips <= 0.0 {
                let k = ((target / self.dynamics.swap_backward) as usize).min(self.state.backward.len() - 1);
                Channel::Swap(self.state.backward[k] as usize)
            } else {
                target -= bwd;
                let site = self.state.flip_bounds.select(target);
                let bound = self.state.flip_bounds.rate(site);
                let rate = self.dynamics.rate(&self.state.config, 2 * site);
                if rate < bound && self.rng.gen::<f64>() * bound >= rate {
                    self.rejections_in_a_row += 1;
                    return Ok(None);
                }
                Channel::Flip(site)
            }
        };
        self.rejections_in_a_row = 0;
        let n = self.dynamics.n;
        let before = self.state.config.mass();
        match channel {
            Channel::Swap(i) => {
                if self.state.config.get(i) == 1 {
                    self.counters.jumps_right += 1;
                } else {
                    self.counters.jumps_left += 1;
                }
                self.state.config.swap(i);
                for b in i.saturating_sub(1)..=(i + 1).min(n - 1) {
                    self.state.reclassify(b);
                }
            }
            Channel::Flip(i) => {
                let occupied = self.state.config.get(i) == 1;
                let c = &mut self.counters;
                match (i, occupied) {
                    (0, false) => c.entered_left += 1,
                    (0, true) => c.exited_left += 1,
                    (j, false) if j == n => c.entered_right += 1,
                    (j, true) if j == n => c.exited_right += 1,
                    (_, false) => c.created += 1,
                    (_, true) => c.annihilated += 1,
                }
                self.state.config.flip(i);
                for b in i.saturating_sub(1)..=i.min(n - 1) {
                    self.state.reclassify(b);
                }
            }
        }
        self.events += 1;
        if cfg!(debug_assertions) && self.events % AUDIT_PERIOD == 0 {
            self.audit()?;
        }
        Ok(Some(EventRecord {
            time,
            channel,
            mass_delta: (self.state.config.mass() as i64 - before as i64) as i8,
        }))
    }

    /// Advances to the next accepted event.
    pub fn step(&mut self) -> Result<EventRecord> {
        loop {
            let t = self.draw_event_time();
            if !t.is_finite() {
                return Err(Error::Absorbing);
            }
            if let Some(ev) = self.fire_at(t)? {
                return Ok(ev);
            }
            if self.rejections_in_a_row >= REJECTION_CHECK && self.total_rate() <= 0.0 {
                return Err(Error::Absorbing);
            }
        }
    }

    /// Advances through the observation times, handing each snapshot to `observe`.
    pub fn run_observed(&mut self, obs_times: &[f64], mut observe: impl FnMut(f64, &Configuration)) -> Result<()> {
        if obs_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("observation times must be nondecreasing"));
        }
        if obs_times.first().is_some_and(|&t| t < self.state.time) {
            return Err(invalid("observation time lies in the past"));
        }
        let mut next = self.draw_event_time();
        for &t_obs in obs_times {
            while next <= t_obs {
                self.fire_at(next)?;
                next = self.draw_event_time();
            }
            observe(t_obs, &self.state.config);
        }
        // The pending proposal is dropped; by memorylessness a fresh draw
        // from the current state has the same law.
        if let Some(&last) = obs_times.last() {
            self.state.time = last;
        }
        Ok(())
    }

    /// Recomputes the bond classes and flip bounds from scratch and
    /// compares them with the incremental state.
    pub fn audit(&self) -> Result<()> {
        let st = &self.state;
        if !st.config.audit() {
            return Err(Error::Audit(format!(
                "cached mass {} does not match occupation count",
                st.config.mass()
            )));
        }
        let (mut nf, mut nb) = (0, 0);
        for b in 0..self.dynamics.n {
            let class = st.bond_class(b);
            if st.class[b] != class {
                return Err(Error::Audit(format!("bond {b} filed under the wrong class")));
            }
            let list = match class {
                FORWARD => {
                    nf += 1;
                    &st.forward
                }
                BACKWARD => {
                    nb += 1;
                    &st.backward
                }
                _ => continue,
            };
            if list.get(st.slot[b] as usize) != Some(&(b as u32)) {
                return Err(Error::Audit(format!("bond {b} missing from its class list")));
            }
        }
        if nf != st.forward.len() || nb != st.backward.len() {
            return Err(Error::Audit("class lists hold stale bonds".into()));
        }
        let fresh = SimState::new(st.config.clone(), &self.dynamics);
        if fresh.flip_bounds.rates() != st.flip_bounds.rates() || fresh.flip_bounds.total() != st.flip_bounds.total() {
            return Err(Error::Audit("flip bound tree out of sync".into()));
        }
        Ok(())
    }
}

/// Snapshots at the observation times plus event counters.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Configuration>,
    pub counters: EventCounters,
    pub events: u64,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.snapshots.first().map_or(0, Configuration::n)
    }

    /// One line per observation time: `time first-bit run,run,…`.
    pub fn to_rle_dump(&self) -> String {
        let mut out = format!("# N={} time first runs\n", self.n());
        for (t, c) in self.times.iter().zip(&self.snapshots) {
            out.push_str(&format!("{t:.9} {}\n", c.to_rle()));
        }
        out
    }

    pub fn from_rle_dump(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut snapshots = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let (t, rest) = line
                .trim()
                .split_once(' ')
                .ok_or_else(|| Error::Config(format!("malformed snapshot line {line:?}")))?;
            times.push(t.parse().map_err(|_| Error::Config(format!("bad time in {line:?}")))?);
            snapshots.push(Configuration::from_rle(rest)?);
        }
        Ok(Self {
            times,
            snapshots,
            counters: EventCounters::default(),
            events: 0,
        })
    }
}

/// Runs the process from `initial` and records it at `obs_times`.
pub fn simulate<R: RngCore>(
    initial: Configuration,
    scheme: &ScalingScheme,
    lattice: &LatticeProfile,
    obs_times: &[f64],
    rng: R,
) -> Result<Trajectory> {
    let mut sim = Simulator::new(initial, scheme, lattice, rng)?;
    let mut times = Vec::with_capacity(obs_times.len());
    let mut snapshots = Vec::with_capacity(obs_times.len());
    sim.run_observed(obs_times, |t, c| {
        times.push(t);
        snapshots.push(c.clone());
    })?;
    Ok(Trajectory {
        times,
        snapshots,
        counters: *sim.counters(),
        events: sim.events(),
    })
}

/// Independent `Bernoulli(u0(i/N))` occupations.
pub fn sample_initial<R: Rng>(u0: impl Fn(f64) -> f64, n: usize, rng: &mut R) -> Result<Configuration> {
    let mut bits = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let u = u0(i as f64 / n as f64);
        if !(0.0..=1.0).contains(&u) {
            return Err(invalid(format!("initial density {u} at site {i} outside [0, 1]")));
        }
        bits.push(u8::from(rng.gen::<f64>() < u));
    }
    Configuration::from_bits(&bits)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::microsim::BoundaryRates;
    use crate::profiles::ProfilePair;

    fn lattice(n: usize, v: f64, rho: f64) -> LatticeProfile {
        ProfilePair::constant(v, rho).unwrap().discretize_unchecked(n)
    }

    #[test]
    fn swap_rates() {
        let n = 8;
        let s = ScalingScheme::unchecked(n, 1.0, 4.0, 2, BoundaryRates::closed()).unwrap();
        let lat = lattice(n, 0.0, 0.5);
        let c = Configuration::from_bits(&[0, 0, 1, 0, 0, 1, 0, 0, 0]).unwrap();
        let r = channel_rates(&c, &s, &lat).unwrap();
        // particle at 2, hole at 3: N(1 + σ/2)
        assert_eq!(r[Channel::Swap(2).index()], 8.0 * 3.0);
        // hole at 4, particle at 5: only the viscous part N σ/2
        assert_eq!(r[Channel::Swap(4).index()], 8.0 * 2.0);
        assert_eq!(r[Channel::Swap(0).index()], 0.0);
    }

    #[test]
    fn flip_rates() {
        let n = 4;
        let s = ScalingScheme::unchecked(n, 1.0, 1.0, 1, BoundaryRates::new([0.3, 0.7, 0.1, 0.2])).unwrap();
        let lat = lattice(n, 4.0, 0.25);
        let c = Configuration::from_bits(&[0, 0, 1, 0, 1]).unwrap();
        let r = channel_rates(&c, &s, &lat).unwrap();
        assert_eq!(r[Channel::Flip(1).index()], 1.0);
        assert_eq!(r[Channel::Flip(2).index()], 3.0);
        assert_eq!(r[Channel::Flip(0).index()], 4.0 * 0.3);
        assert_eq!(r[Channel::Flip(4).index()], 4.0 * 0.2);
    }

    #[test]
    fn affected_channels_of_a_swap() {
        let n = 10;
        let got: Vec<Channel> = Channel::Swap(4).affected(n).map(Channel::from_index).collect();
        assert_eq!(
            got,
            vec![
                Channel::Swap(3),
                Channel::Flip(4),
                Channel::Swap(4),
                Channel::Flip(5),
                Channel::Swap(5),
            ]
        );
        let got: Vec<Channel> = Channel::Flip(0).affected(n).map(Channel::from_index).collect();
        assert_eq!(got, vec![Channel::Flip(0), Channel::Swap(0)]);
        let last: Vec<Channel> = Channel::Swap(n - 1).affected(n).map(Channel::from_index).collect();
        assert_eq!(
            last,
            vec![
                Channel::Swap(n - 2),
                Channel::Flip(n - 1),
                Channel::Swap(n - 1),
                Channel::Flip(n)
            ]
        );
    }

    #[test]
    fn only_affected_channels_change() {
        let n = 40;
        let s = ScalingScheme::unchecked(n, 0.8, 6.0, 3, BoundaryRates::default()).unwrap();
        let lat = ProfilePair::example(1.0, 0.2, 0.8).unwrap().discretize(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init = sample_initial(|_| 0.5, n, &mut rng).unwrap();
        let mut sim = Simulator::new(init, &s, &lat, rng).unwrap();
        let dynamics = Dynamics::new(&s, &lat).unwrap();
        for _ in 0..2000 {
            let before = dynamics.all_rates(&sim.state().config);
            let ev = sim.step().unwrap();
            let after = dynamics.all_rates(&sim.state().config);
            let window = ev.channel.affected(n);
            for idx in 0..before.len() {
                if !window.contains(&idx) {
                    assert_eq!(before[idx], after[idx]);
                }
            }
            sim.audit().unwrap();
            assert!((sim.total_rate() - after.iter().sum::<f64>()).abs() < 1e-9 * sim.total_rate());
        }
    }

    #[test]
    fn single_channel_waiting_time() {
        // Two sites, everything off except creation at site 0.
        let n = 1;
        let s = ScalingScheme::unchecked(n, 1.0, 0.0, 1, BoundaryRates::new([2.0, 0.0, 0.0, 0.0])).unwrap();
        let lat = lattice(n, 0.0, 0.5);
        let mut total = 0.0;
        let runs = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..runs {
            let seed = rng.gen();
            let mut sim = Simulator::new(Configuration::empty(n), &s, &lat, ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let ev = sim.step().unwrap();
            assert_eq!(ev.channel, Channel::Flip(0));
            total += ev.time;
        }
        // rate N·c_in = 2, mean 1/2, standard error 0.5/sqrt(runs)
        let mean = total / runs as f64;
        assert!((mean - 0.5).abs() < 4.0 * 0.5 / (runs as f64).sqrt());
    }

    #[test]
    fn selection_frequencies_follow_rates() {
        let tree = RateTree::new(&[1.0, 2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[tree.select(rng.gen::<f64>() * tree.total())] += 1;
        }
        for (c, p) in counts.iter().zip([1.0 / 6.0, 1.0 / 3.0, 0.5]) {
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - draws as f64 * p).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn initial_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_initial(|_| 1.0, 50, &mut rng).unwrap(),
            Configuration::filled(50)
        );
        assert_eq!(sample_initial(|_| 0.0, 50, &mut rng).unwrap(), Configuration::empty(50));
        let n = 10_000;
        let c = sample_initial(|_| 0.5, n, &mut rng).unwrap();
        let mean = c.mass() as f64 / (n + 1) as f64;
        assert!((mean - 0.5).abs() < 0.015);
        assert!(sample_initial(|_| 1.2, 10, &mut rng).is_err());
    }

    #[test]
    fn observation_at_zero_returns_initial() {
        let s = ScalingScheme::with_defaults(256).unwrap();
        let lat = ProfilePair::example(1.0, 0.2, 0.8).unwrap().discretize(256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = sample_initial(|_| 0.5, 256, &mut rng).unwrap();
        let t = simulate(init.clone(), &s, &lat, &[0.0], rng).unwrap();
        assert_eq!(t.snapshots, vec![init]);
        assert_eq!(t.events, 0);
    }

    #[test]
    fn absorbing_state_is_frozen() {
        let n = 16;
        let s = ScalingScheme::unchecked(n, 1.0, 3.0, 2, BoundaryRates::closed()).unwrap();
        let lat = lattice(n, 0.0, 0.5);
        let t = simulate(
            Configuration::filled(n),
            &s,
            &lat,
            &[0.0, 0.5, 1.0, 10.0],
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(t.snapshots.iter().all(|c| *c == Configuration::filled(n)));
        let mut sim = Simulator::new(Configuration::filled(n), &s, &lat, ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(sim.step(), Err(Error::Absorbing)));
    }

    #[test]
    fn closed_system_conserves_mass() {
        let n = 64;
        let s = ScalingScheme::unchecked(n, 0.9, 8.0, 4, BoundaryRates::closed()).unwrap();
        let lat = lattice(n, 0.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let init = sample_initial(|x| x, n, &mut rng).unwrap();
        let mass = init.mass();
        let obs: Vec<f64> = (0..=20).map(|k| k as f64 * 0.01).collect();
        let t = simulate(init, &s, &lat, &obs, rng).unwrap();
        assert!(t.events > 200);
        assert!(t.snapshots.iter().all(|c| c.mass() == mass && c.audit()));
        assert_eq!(t.counters.net_mass_change(), 0);
    }

    #[test]
    fn counters_balance_mass() {
        let n = 32;
        let s = ScalingScheme::unchecked(n, 1.0, 4.0, 3, BoundaryRates::new([1.0, 0.2, 0.3, 2.0])).unwrap();
        let lat = ProfilePair::example(1.0, 0.2, 0.8).unwrap().discretize(n).unwrap();
        let init = Configuration::empty(n);
        let t = simulate(init, &s, &lat, &[0.0, 0.3], ChaCha8Rng::seed_from_u64(21)).unwrap();
        let delta = t.snapshots[1].mass() as i64 - t.snapshots[0].mass() as i64;
        assert_eq!(delta, t.counters.net_mass_change());
        assert_eq!(t.counters.total(), t.events);
    }

    #[test]
    fn seed_determinism() {
        let n = 128;
        let s = ScalingScheme::unchecked(n, 1.0, 25.0, 10, BoundaryRates::default()).unwrap();
        let lat = ProfilePair::example(1.0, 0.2, 0.8).unwrap().discretize(n).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let init = sample_initial(|_| 0.5, n, &mut rng).unwrap();
            simulate(init, &s, &lat, &[0.01, 0.02, 0.05], rng)
                .unwrap()
                .to_rle_dump()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn two_state_site_occupation_fraction() {
        // Three sites, symmetric exchange, reservoirs priced like the
        // interior flips: Bernoulli(ρ) product measure is stationary.
        let n = 2;
        let v = 50.0;
        let rho = 0.3;
        let s = ScalingScheme::unchecked(
            n,
            0.5,
            0.0,
            1,
            BoundaryRates::new([
                v * rho / n as f64,
                v * (1.0 - rho) / n as f64,
                v * rho / n as f64,
                v * (1.0 - rho) / n as f64,
            ]),
        )
        .unwrap();
        let lat = lattice(n, v, rho);
        let obs: Vec<f64> = (0..=20_000).map(|k| k as f64 * 0.01).collect();
        let t = simulate(Configuration::empty(n), &s, &lat, &obs, ChaCha8Rng::seed_from_u64(4)).unwrap();
        let frac = t.snapshots[100..].iter().map(|c| c.get(1) as f64).sum::<f64>() / (t.snapshots.len() - 100) as f64;
        assert!((frac - rho).abs() < 0.02, "occupation fraction {frac}");
    }

    #[test]
    fn rle_dump_roundtrip() {
        let n = 20;
        let s = ScalingScheme::unchecked(n, 1.0, 3.0, 2, BoundaryRates::default()).unwrap();
        let lat = ProfilePair::example(1.0, 0.2, 0.8).unwrap().discretize(n).unwrap();
        let t = simulate(
            Configuration::empty(n),
            &s,
            &lat,
            &[0.0, 0.1, 0.2],
            ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let back = Trajectory::from_rle_dump(&t.to_rle_dump()).unwrap();
        assert_eq!(back.snapshots, t.snapshots);
        assert_eq!(back.times, t.times);
    }
}
