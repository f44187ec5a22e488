//! Repeated single-page fetches reported as first run versus the rest.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::target::Target;
use super::BenchError;
use crate::clock::Clock;
use crate::edge::CacheStatus;
use crate::netmodel::{fcp_proxy, ThrottleProfile};

pub const DEFAULT_RUNS: u32 = 5;

/// What is reset before the first run (and only the first run).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResetPolicy {
    pub purge_cache: bool,
    pub cold_worker: bool,
}

impl ResetPolicy {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn purge() -> Self {
        Self {
            purge_cache: true,
            cold_worker: false,
        }
    }

    pub fn cold() -> Self {
        Self {
            purge_cache: false,
            cold_worker: true,
        }
    }

    pub fn both() -> Self {
        Self {
            purge_cache: true,
            cold_worker: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRun {
    pub run: u32,
    pub status: u16,
    pub cache_status: CacheStatus,
    pub body_bytes: u64,
    #[serde(rename = "server_time_ms", with = "crate::serde_ms")]
    pub server_time: Duration,
    #[serde(rename = "fcp_ms", with = "crate::serde_ms")]
    pub fcp: Duration,
}

/// First run, then median and mean over runs 2..=n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(rename = "run_1_ms", with = "crate::serde_ms")]
    pub run_1: Duration,
    #[serde(rename = "median_rest_ms", with = "crate::serde_ms")]
    pub median_rest: Duration,
    #[serde(rename = "mean_rest_ms", with = "crate::serde_ms")]
    pub mean_rest: Duration,
}

impl MetricSummary {
    /// `values` must hold at least two runs.
    pub fn from_runs(values: &[Duration]) -> Self {
        let (first, rest) = values.split_first().expect("at least one run");
        Self {
            run_1: *first,
            median_rest: median(rest),
            mean_rest: mean(rest),
        }
    }
}

/// Median; the mean of the two middle values for an even count.
pub fn median(values: &[Duration]) -> Duration {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        Duration::ZERO
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

pub fn mean(values: &[Duration]) -> Duration {
    if values.is_empty() {
        return Duration::ZERO;
    }
    let total: u128 = values.iter().map(|d| d.as_nanos()).sum();
    Duration::from_nanos((total / values.len() as u128) as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub target: String,
    pub path: String,
    pub reset: ResetPolicy,
    /// Entries removed by the pre-run purge, when one was requested.
    pub purged_entries: Option<usize>,
    pub profile: ThrottleProfile,
    pub runs: Vec<AuditRun>,
    pub fcp: MetricSummary,
    pub server_time: MetricSummary,
}

impl AuditReport {
    pub fn cache_statuses(&self) -> Vec<CacheStatus> {
        self.runs.iter().map(|r| r.cache_status).collect()
    }
}

pub async fn run_audit(
    target: &Target,
    path: &str,
    profile: &ThrottleProfile,
    runs: u32,
    reset: ResetPolicy,
    clock: &Clock,
) -> Result<AuditReport, BenchError> {
    if runs < 2 {
        return Err(BenchError::InvalidConfig(format!("audit needs >= 2 runs, got {runs}")));
    }
    profile
        .validate()
        .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;

    let purged_entries = target.reset(reset.purge_cache, reset.cold_worker).await?;

    let mut conn = target.connection(0)?;
    let mut records = Vec::with_capacity(runs as usize);
    for run in 1..=runs {
        let resp = conn
            .request(path, clock)
            .await
            .map_err(|e| BenchError::TargetUnreachable(format!("{target}{path}: {e}")))?;
        let fcp = fcp_proxy(&resp, profile).map_err(|_| BenchError::BadStatus {
            path: path.to_string(),
            status: resp.status,
        })?;
        records.push(AuditRun {
            run,
            status: resp.status,
            cache_status: resp.cache_status,
            body_bytes: resp.body.len() as u64,
            server_time: resp.server_time,
            fcp,
        });
    }

    let server: Vec<Duration> = records.iter().map(|r| r.server_time).collect();
    let fcp: Vec<Duration> = records.iter().map(|r| r.fcp).collect();
    Ok(AuditReport {
        target: target.to_string(),
        path: path.to_string(),
        reset,
        purged_entries,
        profile: profile.clone(),
        fcp: MetricSummary::from_runs(&fcp),
        server_time: MetricSummary::from_runs(&server),
        runs: records,
    })
}
