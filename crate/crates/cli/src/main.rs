//! `hydrolimit`: run the particle, continuum and comparison experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hydrolimit::harness::{
    emit_outputs, job_rng, one_block_scaling, run_boundary_experiments, run_convergence_sweep, run_oracle_validation,
    run_solver_diagnostics, ExperimentConfig, RunReport, Stream,
};
use hydrolimit::microsim::{sample_initial, simulate};
use hydrolimit::pde_solver::{solve, SolveOptions};
use hydrolimit::profiles::{check_conditions, dyadic_scales, CheckOptions};
use hydrolimit::Result;

#[derive(Parser)]
#[command(name = "hydrolimit", version, about)]
struct Cli {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "HYDROLIMIT_OUTPUT")]
    output: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Command-line overrides of configuration keys.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, global = true)]
    sigma_exponent: Option<f64>,
    #[arg(long, global = true)]
    k_exponent: Option<f64>,
    /// `in_left,out_left,in_right,out_right`.
    #[arg(long, global = true, value_delimiter = ',', num_args = 4)]
    boundary_rates: Option<Vec<f64>>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    obs_times: Option<Vec<f64>>,
    #[arg(long, global = true)]
    ensemble: Option<usize>,
    #[arg(long, global = true)]
    pde_cells: Option<usize>,
    #[arg(long, global = true)]
    comparison_cells: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the integrability and growth conditions of the profile.
    CheckProfile {
        /// Number of dyadic scales below 1/4.
        #[arg(long, default_value_t = 12)]
        scales: usize,
    },
    /// Run one trajectory and write its snapshots in run-length form.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        replica: usize,
    },
    /// Solve the balance law; optionally run the entropy and energy diagnostics.
    Solve {
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        diagnostics: bool,
    },
    /// Convergence of ensemble-mean densities to the entropy solution.
    Sweep,
    /// Boundary pinning and reservoir-rate insensitivity (runs the sweep first).
    Boundary,
    /// Small-lattice comparison with the exact law.
    OracleValidate,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let o = &cli.overrides;
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = o.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(
        p,
        n_list,
        sigma_exponent,
        k_exponent,
        t_end,
        obs_times,
        ensemble,
        pde_cells,
        comparison_cells,
        seed
    );
    if let Some(r) = &o.boundary_rates {
        cfg.boundary_rates = [r[0], r[1], r[2], r[3]];
    }
    if let Some(dir) = &cli.output {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let out = cfg.output_dir.clone();
    let mut report = RunReport::default();
    match &cli.command {
        Command::CheckProfile { scales } => {
            let profile = cfg.profile.build()?;
            let r = check_conditions(&profile, &dyadic_scales(0.25, *scales), CheckOptions::default())?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            return Ok(r.nonintegrable_left.verdict.holds()
                && r.nonintegrable_right.verdict.holds()
                && r.cond_v2.verdict.holds()
                && (r.cond_v1.verdict.holds() || r.cond_v3.verdict.holds()));
        }
        Command::Simulate { n, replica } => {
            let profile = cfg.profile.build()?;
            let scheme = cfg.scheme(*n, cfg.boundary_rates)?;
            let lattice = profile.discretize(*n)?;
            let mut rng = job_rng(cfg.seed, Stream::Sweep, *n, *replica);
            let init = sample_initial(|x| cfg.initial.eval(&profile, x), *n, &mut rng)?;
            let mut times = vec![0.0];
            times.extend(&cfg.obs_times);
            let traj = simulate(init, &scheme, &lattice, &times, rng)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("trajectory_N{n}_r{replica}.rle"));
            std::fs::write(&path, traj.to_rle_dump())?;
            println!("{} events, written to {}", traj.events, path.display());
            return Ok(true);
        }
        Command::Solve { cells, diagnostics } => {
            let profile = cfg.profile.build()?;
            let m = cells.unwrap_or(cfg.pde_cells);
            let sol = solve(
                |x| cfg.initial.eval(&profile, x),
                &profile,
                cfg.p,
                m,
                &cfg.obs_times,
                SolveOptions {
                    cfl_factor: cfg.cfl,
                    record_every_step: false,
                },
            )?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("pde_M{m}.csv"));
            std::fs::write(&path, sol.to_csv())?;
            println!("{} steps, written to {}", sol.steps, path.display());
            if !*diagnostics {
                return Ok(true);
            }
            report.diagnostics = Some(run_solver_diagnostics(&cfg)?);
        }
        Command::Sweep => {
            let sweep = run_convergence_sweep(&cfg)?;
            report.scaling = scaling_for(&cfg, &sweep);
            report.sweep = Some(sweep);
        }
        Command::Boundary => {
            let sweep = run_convergence_sweep(&cfg)?;
            report.boundary = Some(run_boundary_experiments(&cfg, Some(&sweep))?);
            report.sweep = Some(sweep);
        }
        Command::OracleValidate => {
            report.oracle = Some(run_oracle_validation(&cfg)?);
        }
    }
    let files = emit_outputs(&report, &out)?;
    for f in &files {
        println!("{}", f.display());
    }
    let passed = report.passed();
    println!("verdict: {}", if passed { "pass" } else { "fail" });
    Ok(passed)
}

/// Block-residual scaling over every size that ran, when there are at least two.
fn scaling_for(
    cfg: &ExperimentConfig,
    sweep: &hydrolimit::harness::SweepReport,
) -> Option<hydrolimit::harness::ScalingReport> {
    let sizes: Vec<usize> = sweep.rows.iter().filter(|r| r.ok()).map(|r| r.n).collect();
    (sizes.len() >= 2)
        .then(|| one_block_scaling(sweep, &sizes, cfg.tolerances.one_block_factor).ok())
        .flatten()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
