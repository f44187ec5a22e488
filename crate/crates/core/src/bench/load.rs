//! Closed-loop sustained load: each connection sends its next request as soon
//! as the previous response has arrived, until the configured duration is up.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::histogram::LatencyHistogram;
use super::target::Target;
use super::BenchError;
use crate::clock::Clock;

/// Percentiles reported for every load run.
pub const PERCENTILES: [f64; 8] = [50.0, 75.0, 90.0, 97.5, 99.0, 99.9, 99.99, 100.0];

pub const DEFAULT_CONNECTIONS: usize = 10;

const MIN_STEP: Duration = Duration::from_micros(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(with = "crate::serde_ms")]
    pub duration: Duration,
    pub connections: usize,
    pub target_path: String,
    /// Requests sent (and not recorded) before timing starts.
    pub warmup_requests: u32,
    /// Drop samples whose request started in the first second.
    pub discard_first_second: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            duration: Duration::from_secs(30),
            connections: DEFAULT_CONNECTIONS,
            target_path: "/".into(),
            warmup_requests: 0,
            discard_first_second: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.duration.is_zero() {
            return Err(BenchError::InvalidConfig("duration must be > 0".into()));
        }
        if self.connections == 0 {
            return Err(BenchError::InvalidConfig("connections must be >= 1".into()));
        }
        if !self.target_path.starts_with('/') {
            return Err(BenchError::InvalidConfig(format!(
                "target path `{}` must start with `/`",
                self.target_path
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentilePoint {
    pub percentile: f64,
    #[serde(rename = "latency_ms", with = "crate::serde_ms")]
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub target: String,
    pub path: String,
    pub connections: usize,
    /// True when `connections` is the untuned default of 10.
    pub connections_is_default: bool,
    #[serde(rename = "duration_ms", with = "crate::serde_ms")]
    pub duration: Duration,
    /// Measured window: from the start of timing until the last connection
    /// finished its final request.
    #[serde(rename = "elapsed_ms", with = "crate::serde_ms")]
    pub elapsed: Duration,
    pub total_responses: u64,
    pub error_count: u64,
    pub total_bytes: u64,
    #[serde(rename = "avg_latency_ms", with = "crate::serde_ms")]
    pub avg_latency: Duration,
    pub requests_per_second: f64,
    pub bytes_per_second: f64,
    pub percentiles: Vec<PercentilePoint>,
    #[serde(rename = "max_ms", with = "crate::serde_ms")]
    pub max: Duration,
    pub clamped_samples: u64,
    pub warmup_requests: u32,
    pub discarded_samples: u64,
}

impl BenchReport {
    pub fn percentile(&self, p: f64) -> Option<Duration> {
        self.percentiles
            .iter()
            .find(|pt| pt.percentile == p)
            .map(|pt| pt.latency)
    }

    /// Relative gap `|self − other| / other` at each reported percentile up
    /// to `up_to` (inclusive). p100 is an outlier measure and is never part
    /// of a verdict, whatever `up_to` says.
    pub fn relative_gaps(&self, other: &BenchReport, up_to: f64) -> Vec<(f64, f64)> {
        self.percentiles
            .iter()
            .filter(|pt| pt.percentile <= up_to && pt.percentile < 100.0)
            .filter_map(|pt| {
                let theirs = other.percentile(pt.percentile)?.as_secs_f64();
                let ours = pt.latency.as_secs_f64();
                Some((pt.percentile, (ours - theirs).abs() / theirs))
            })
            .collect()
    }
}

#[derive(Default)]
struct ConnStats {
    hist: LatencyHistogram,
    ok: u64,
    errors: u64,
    bytes: u64,
    discarded: u64,
}

pub async fn run_load(target: &Target, cfg: &BenchConfig, clock: &Clock) -> Result<BenchReport, BenchError> {
    cfg.validate()?;

    if cfg.warmup_requests > 0 {
        let mut conn = target.connection(usize::MAX)?;
        for _ in 0..cfg.warmup_requests {
            conn.request(&cfg.target_path, clock)
                .await
                .map_err(BenchError::TargetUnreachable)?;
        }
    }

    let start = clock.now();
    let deadline = start + cfg.duration;
    let measure_from = if cfg.discard_first_second {
        start + Duration::from_secs(1)
    } else {
        start
    };

    let mut tasks = Vec::with_capacity(cfg.connections);
    for i in 0..cfg.connections {
        let mut conn = target.connection(i)?;
        let path = cfg.target_path.clone();
        let clock = *clock;
        tasks.push(tokio::spawn(async move {
            let mut stats = ConnStats::default();
            loop {
                let sent = clock.now();
                if sent >= deadline {
                    break;
                }
                let reply = conn.request(&path, &clock).await;
                // A zero-latency target would otherwise never let virtual time reach the deadline.
                if clock.now() == sent {
                    clock.sleep(MIN_STEP).await;
                }
                match reply {
                    Ok(resp) => {
                        let latency = clock.now() - sent;
                        if sent < measure_from {
                            stats.discarded += 1;
                            continue;
                        }
                        stats.hist.record(latency);
                        stats.bytes += resp.body.len() as u64;
                        if resp.is_success() {
                            stats.ok += 1;
                        } else {
                            stats.errors += 1;
                        }
                    }
                    Err(_) => {
                        stats.errors += 1;
                        clock.sleep(Duration::from_millis(10)).await;
                    }
                }
            }
            stats
        }));
    }

    let mut total = ConnStats::default();
    for task in tasks {
        let s = task
            .await
            .map_err(|e| BenchError::TargetUnreachable(format!("connection task failed: {e}")))?;
        total.hist.merge(&s.hist);
        total.ok += s.ok;
        total.errors += s.errors;
        total.bytes += s.bytes;
        total.discarded += s.discarded;
    }
    let elapsed = clock.now().saturating_sub(measure_from);

    if total.ok == 0 {
        return Err(BenchError::TargetUnreachable(format!(
            "{target}: no successful responses ({} errors)",
            total.errors
        )));
    }

    let secs = elapsed.as_secs_f64().max(f64::MIN_POSITIVE);
    let percentiles = PERCENTILES
        .iter()
        .map(|&p| {
            Ok(PercentilePoint {
                percentile: p,
                latency: total.hist.percentile(p)?,
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;

    Ok(BenchReport {
        target: target.to_string(),
        path: cfg.target_path.clone(),
        connections: cfg.connections,
        connections_is_default: cfg.connections == DEFAULT_CONNECTIONS,
        duration: cfg.duration,
        elapsed,
        total_responses: total.hist.len(),
        error_count: total.errors,
        total_bytes: total.bytes,
        avg_latency: total.hist.mean().unwrap_or_default(),
        requests_per_second: total.hist.len() as f64 / secs,
        bytes_per_second: total.bytes as f64 / secs,
        percentiles,
        max: total.hist.max().unwrap_or_default(),
        clamped_samples: total.hist.clamped(),
        warmup_requests: cfg.warmup_requests,
        discarded_samples: total.discarded,
    })
}
