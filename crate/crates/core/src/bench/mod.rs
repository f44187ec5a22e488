//! Load and audit benchmarks plus their report tables.

mod audit;
mod histogram;
mod load;
mod report;
mod target;

pub use audit::{mean, median, run_audit, AuditReport, AuditRun, MetricSummary, ResetPolicy, DEFAULT_RUNS};
pub use histogram::{LatencyHistogram, HIGHEST, LOWEST};
pub use load::{run_load, BenchConfig, BenchReport, PercentilePoint, DEFAULT_CONNECTIONS, PERCENTILES};
pub use report::{compare, AuditRow, ComparisonTable, Report};
pub use target::{SimLink, Target, ADMIN_COLD, ADMIN_PURGE, ADMIN_STATS};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("percentile {0} is outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("target unreachable: {0}")]
    TargetUnreachable(String),
    #[error("{path} answered {status}")]
    BadStatus { path: String, status: u16 },
    #[error("could not reset target: {0}")]
    ResetFailed(String),
    #[error("cannot compare audit and load reports in one table")]
    MixedKinds,
    #[error("nothing to compare")]
    NoReports,
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
}
