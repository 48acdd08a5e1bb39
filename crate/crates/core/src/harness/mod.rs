//! Experiment orchestration: configuration, multi-seed runs of every solver,
//! exact-oracle reports, parameter sweeps and their on-disk artifacts.

mod config;
mod experiment;
mod output;

pub use config::{
    parse_list, ExperimentConfig, RewardKind, ScenarioConfig, Solver, SCHEMA_VERSION,
};
pub use experiment::{
    ensure_writable, env_for, oracle, run, run_csv, run_solver, scenario_for, summarize, sweep,
    write_report, DeviceDiagnostics, ExperimentReport, OracleReport, RunRecord, SummaryRow,
    SummaryTable, SweepParam, SweepRow, MEAN_WINDOW, RUN_HEADER, SUMMARY_HEADER,
};
pub use output::{aligned_table, write_atomic};
