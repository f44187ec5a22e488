//! Edge worker simulator: serves a deployed site under one of five rendering
//! strategies over an in-process KV cache.
//!
//! | strategy | on request |
//! |----------|------------|
//! | STATIC   | serve the prebuilt page |
//! | SSR      | fetch from upstream and render, every time |
//! | ISR      | render on miss, cache by path, serve cached copy afterwards |
//! | SWR      | like ISR, but a stale entry is served at once and refreshed in the background |
//! | DPR      | like ISR, but cache keys include the deploy id |
//!
//! `server_time` is measured on the worker's [`Clock`]; under the virtual
//! clock it is exactly `base_handling + kv reads + upstream delay (if a render
//! happened) + cold start penalty (if cold)`.

mod kv;
mod worker;

pub use kv::{CacheEntry, CacheKey, KvStore};
pub use worker::{EdgeWorker, WorkerStats};

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ssg::DeployId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EdgeError {
    #[error("deploy {attempted} is not newer than current deploy {current}")]
    StaleDeploy {
        current: DeployId,
        attempted: DeployId,
    },
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
    #[error("no site has been deployed")]
    NotDeployed,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("upstream error: {0}")]
    Upstream(String),
}

impl EdgeError {
    pub fn status(&self) -> u16 {
        match self {
            EdgeError::NotFound(_) => 404,
            EdgeError::Upstream(_) => 502,
            EdgeError::NotDeployed => 503,
            EdgeError::StaleDeploy { .. } | EdgeError::InvalidConfig(_) => 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Prebuilt pages (static site generation).
    #[serde(alias = "ssg")]
    Static,
    Ssr,
    Isr,
    Swr,
    Dpr,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Static,
        Strategy::Ssr,
        Strategy::Isr,
        Strategy::Swr,
        Strategy::Dpr,
    ];

    pub fn uses_cache(self) -> bool {
        matches!(self, Strategy::Isr | Strategy::Swr | Strategy::Dpr)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Static => "STATIC",
            Strategy::Ssr => "SSR",
            Strategy::Isr => "ISR",
            Strategy::Swr => "SWR",
            Strategy::Dpr => "DPR",
        })
    }
}

impl FromStr for Strategy {
    type Err = EdgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" | "ssg" => Ok(Strategy::Static),
            "ssr" => Ok(Strategy::Ssr),
            "isr" => Ok(Strategy::Isr),
            "swr" => Ok(Strategy::Swr),
            "dpr" => Ok(Strategy::Dpr),
            other => Err(EdgeError::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub upstream_delay: Duration,
    /// Staleness horizon for ISR and SWR; `None` is infinite. Ignored by
    /// STATIC, SSR and DPR.
    pub ttl: Option<Duration>,
    /// Added to the first request after the worker starts or is marked cold.
    pub cold_start_penalty: Duration,
    /// Simulated fixed per-request handling cost.
    pub base_handling: Duration,
    /// Simulated latency of one KV read.
    pub kv_read_delay: Duration,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            upstream_delay: Duration::from_millis(100),
            ttl: match strategy {
                Strategy::Swr => Some(Duration::from_secs(60)),
                _ => None,
            },
            cold_start_penalty: Duration::ZERO,
            base_handling: Duration::ZERO,
            kv_read_delay: Duration::ZERO,
        }
    }

    pub fn with_ttl(mut self, ttl: Option<Duration>) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn with_cold_start(mut self, penalty: Duration) -> Self {
        self.cold_start_penalty = penalty;
        self
    }

    pub fn with_upstream_delay(mut self, delay: Duration) -> Self {
        self.upstream_delay = delay;
        self
    }

    pub fn validate(&self) -> Result<(), EdgeError> {
        match (self.strategy, self.ttl) {
            (Strategy::Swr, None) => Err(EdgeError::InvalidConfig(
                "SWR needs a finite ttl".into(),
            )),
            (Strategy::Swr | Strategy::Isr, Some(ttl)) if ttl.is_zero() => Err(
                EdgeError::InvalidConfig(format!("{} ttl must be > 0", self.strategy)),
            ),
            _ => Ok(()),
        }
    }

    /// The staleness horizon the strategy actually applies.
    pub fn effective_ttl(&self) -> Option<Duration> {
        match self.strategy {
            Strategy::Isr | Strategy::Swr => self.ttl,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CacheStatus {
    Hit,
    Miss,
    Stale,
    Bypass,
}

impl CacheStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheStatus::Hit => "HIT",
            CacheStatus::Miss => "MISS",
            CacheStatus::Stale => "STALE",
            CacheStatus::Bypass => "BYPASS",
        }
    }
}

impl fmt::Display for CacheStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CacheStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "HIT" => Ok(CacheStatus::Hit),
            "MISS" => Ok(CacheStatus::Miss),
            "STALE" => Ok(CacheStatus::Stale),
            "BYPASS" => Ok(CacheStatus::Bypass),
            other => Err(format!("unknown cache status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Bytes,
    /// Request arrival to first byte, on the worker clock.
    pub server_time: Duration,
    pub cache_status: CacheStatus,
    /// Deploy the body was rendered from, when known.
    pub deploy_id: Option<DeployId>,
}

impl Response {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Response header carrying the cache status.
pub const HEADER_CACHE: &str = "x-edge-cache";
/// Response header carrying `server_time` in whole microseconds.
pub const HEADER_SERVER_TIME: &str = "x-server-time-us";
/// Response header carrying the deploy id of the body.
pub const HEADER_DEPLOY: &str = "x-edge-deploy";
