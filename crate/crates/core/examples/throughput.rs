use std::time::Instant;

use hydrolimit::microsim::{sample_initial, simulate, ScalingScheme};
use hydrolimit::profiles::ProfilePair;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let n: usize = std::env::args().nth(1).map_or(2048, |s| s.parse().unwrap());
    let t: f64 = std::env::args().nth(2).map_or(0.05, |s| s.parse().unwrap());
    let scheme = ScalingScheme::with_defaults(n).unwrap();
    let lattice = ProfilePair::example(1.0, 0.2, 0.8).unwrap().discretize(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let init = sample_initial(|_| 0.5, n, &mut rng).unwrap();
    let start = Instant::now();
    let traj = simulate(init, &scheme, &lattice, &[t], rng).unwrap();
    let secs = start.elapsed().as_secs_f64();
    println!(
        "N={n} t={t}: {} events in {secs:.2}s ({:.1} ns/event)",
        traj.events,
        secs * 1e9 / traj.events as f64
    );
}
