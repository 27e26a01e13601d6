//! Experiment orchestration: configuration, seeded ensembles, sweeps and
//! report emission.

pub mod config;
pub mod ensemble;
pub mod experiments;
pub mod output;
mod svg;

pub use config::{job_rng, ExperimentConfig, InitialProfile, ProfileSpec, Stream, Tolerances};
pub use ensemble::{run_ensemble, EnsembleSummary, Estimate};
pub use experiments::{
    comparison_grid, one_block_scaling, oracle_scheme, oracle_tables, run_boundary_experiments, run_convergence_sweep,
    run_oracle_validation, run_solver_diagnostics, solve_reference, BoundaryReport, OracleReport, ScalingReport,
    SolverDiagnostics, SweepReport, SweepRow,
};
pub use output::{emit_outputs, RunReport};
