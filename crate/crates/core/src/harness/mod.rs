//! Simulated trials, experiment grids, monitoring and result files.

pub mod config;
pub mod experiment;
pub mod monitor;
pub mod output;
pub mod trial;

pub use config::{Cadence, Candidate, EnvVariant, Pooling, TrialSettings, SLOPE_GENTLE, SLOPE_STEEP};
pub use experiment::{
    alarm_rows, compare_prior_period, grid_rows, grid_search_xi, mean_se, run_experiment, run_jobs, run_jobs_range, summary_rows, trial_rows,
    AlarmRow, Cell, Environment, GridRow, Job, Metric, PriorPeriodRow, SummaryRow, TrialRow,
};
pub use monitor::{monitor, Alarm, AlarmKind, MonitorThresholds};
pub use trial::{
    entry_day, full_pooling_start, is_update_day, percentile, recruit, run_trial, trial_seed, LogRow, StateSource, TrialContext,
    TrialResult,
};
