//! Client-side network model and a First Contentful Paint proxy.
//!
//! The link is a single connection with fixed bandwidth and no slow start:
//!
//! ```text
//! transfer(bytes) = bytes * 8 / downlink
//! fcp             = rtt + server_time + transfer(|body|) + render_overhead
//! ```

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::Response;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("cannot compute FCP for a {0} response")]
    InvalidResponse(u16),
    #[error("invalid throttle profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThrottleProfile {
    pub name: String,
    pub downlink_bps: u64,
    pub uplink_bps: u64,
    #[serde(with = "crate::serde_ms")]
    pub rtt: Duration,
    #[serde(with = "crate::serde_ms")]
    pub render_overhead: Duration,
}

impl ThrottleProfile {
    /// 1.6 Mbps down, 750 Kbps up, 150 ms round trip.
    pub fn mobile_throttled() -> Self {
        Self {
            name: "mobile-throttled".into(),
            downlink_bps: 1_600_000,
            uplink_bps: 750_000,
            rtt: Duration::from_millis(150),
            render_overhead: Duration::ZERO,
        }
    }

    /// No network cost at all: FCP reduces to `server_time`. The one profile
    /// allowed a zero rtt; its bandwidths are effectively unbounded.
    pub fn none() -> Self {
        Self {
            name: "none".into(),
            downlink_bps: u64::MAX,
            uplink_bps: u64::MAX,
            rtt: Duration::ZERO,
            render_overhead: Duration::ZERO,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "mobile-throttled" | "mobile" => Some(Self::mobile_throttled()),
            "none" => Some(Self::none()),
            _ => None,
        }
    }

    pub fn with_render_overhead(mut self, overhead: Duration) -> Self {
        self.render_overhead = overhead;
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.downlink_bps == 0 || self.uplink_bps == 0 {
            return Err(NetError::InvalidProfile("bandwidth must be > 0".into()));
        }
        if self.rtt.is_zero() && self.name != "none" {
            return Err(NetError::InvalidProfile("rtt must be > 0".into()));
        }
        Ok(())
    }
}

impl FromStr for ThrottleProfile {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::preset(s).ok_or_else(|| NetError::InvalidProfile(format!("unknown preset `{s}`")))
    }
}

impl fmt::Display for ThrottleProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} bps down, {} bps up, rtt {} ms, render overhead {} ms)",
            self.name,
            self.downlink_bps,
            self.uplink_bps,
            self.rtt.as_millis(),
            self.render_overhead.as_secs_f64() * 1e3
        )
    }
}

/// Time to push `bytes` through the downlink, rounded down to the nanosecond.
pub fn transfer_time(bytes: u64, profile: &ThrottleProfile) -> Duration {
    let nanos = bytes as u128 * 8 * 1_000_000_000 / profile.downlink_bps as u128;
    Duration::from_nanos(nanos.min(u64::MAX as u128) as u64)
}

pub fn fcp_proxy(response: &Response, profile: &ThrottleProfile) -> Result<Duration, NetError> {
    if response.status != 200 {
        return Err(NetError::InvalidResponse(response.status));
    }
    Ok(profile.rtt
        + response.server_time
        + transfer_time(response.body.len() as u64, profile)
        + profile.render_overhead)
}

/// The render overhead that makes a response with `server_time` and a body
/// of `body_len` bytes hit `target_fcp` under `profile` (zero if the target
/// is already exceeded without it).
pub fn calibrate_render_overhead(
    target_fcp: Duration,
    server_time: Duration,
    body_len: u64,
    profile: &ThrottleProfile,
) -> Duration {
    target_fcp.saturating_sub(profile.rtt + server_time + transfer_time(body_len, profile))
}
