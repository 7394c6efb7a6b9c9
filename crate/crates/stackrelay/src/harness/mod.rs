//! Experiment harness: TOML scenario configs, deterministic runners, and
//! CSV reporting.
//!
//! A scenario file picks a policy, an environment, hyperparameters, seeds,
//! and optionally a sweep; the runners in [`run`] execute it and the writers
//! in [`report`] serialize results. Identical configs and seeds always
//! produce byte-identical CSV output.

pub mod config;
pub mod report;
pub mod run;

pub use config::{
    load_config, parse_config, AgentSection, ChannelSection, DqnSection, GameSection, Mode,
    Policy, RunSection, ScenarioConfig, ScheduleSection, SweepAxis, SweepSection,
};
pub use report::{
    fmt_f64, lower_median, summarize_tests, write_metrics, write_oracle, write_solve,
    write_training_curve, MetricsRow, SummaryStats, METRICS_HEADER,
};
pub use run::{
    compare_settings, oracle_check, run_scenario, run_sweep, solve_draws, CompareReport,
    OracleReport, OracleRow, ScenarioRows, SolveRow, SweepReport,
};
