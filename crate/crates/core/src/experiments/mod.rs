//! Monte Carlo harness, configuration files and report persistence.
//!
//! Every sample `i` draws its Wiener path from `derive_seed(master, 1, i)` and
//! reuses it on every noise level of the ladder, so differences across levels
//! are common-random-number couplings. Samples run on a private worker pool
//! and are reduced in index order, which makes `report.json` independent of
//! the number of workers.

mod config;
mod identities;
mod report;
mod runners;

pub use config::{ExperimentConfig, InitialCondition, LadderConfig, McConfig, OutputConfig, OUTPUT_DIR_ENV};
pub use identities::{identity_battery, IDENTITY_TOL};
pub use report::{
    CheckResult, ExperimentKind, ExperimentReport, Fit, FitVariable, LevelStat, RunOutput, Series, TailCell,
};
pub use runners::{
    run_clt_limit, run_clt_rate, run_invariant_suite, run_mdp_tail, run_rate_min, run_simulate, Simulation,
};
