//! Time source shared by the worker, the upstream and the benchmarks.
//!
//! All delays go through [`Clock::sleep`], which is backed by tokio's timer.
//! Under a paused current-thread runtime (see [`runtime`] with
//! [`ClockMode::Virtual`]) the timer auto-advances whenever every task is
//! idle, so sleeps cost no wall time and elapsed durations are exact sums of
//! the requested delays. Under a normal runtime the same code sleeps for real.
//!
//! tokio's timer wheel ticks in whole milliseconds. A virtual clock therefore
//! runs the runtime's time [`VIRTUAL_SCALE`] times faster than it reports, so
//! one timer tick is one simulated microsecond and delays are exact to 1µs.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::runtime::{Builder, Runtime};
use tokio::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Deterministic simulated time on a single-threaded scheduler.
    Virtual,
    /// Real time on a multi-threaded runtime.
    Wall,
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockMode::Virtual => "virtual",
            ClockMode::Wall => "wall",
        })
    }
}

impl FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "virtual" => Ok(ClockMode::Virtual),
            "wall" => Ok(ClockMode::Wall),
            other => Err(format!("unknown clock mode `{other}`")),
        }
    }
}

/// Builds the runtime matching `mode`.
///
/// Virtual mode is a current-thread runtime with time paused at start; tasks
/// run in spawn order and timers fire in deadline order, which makes every
/// run with the same inputs reproducible.
pub fn runtime(mode: ClockMode) -> io::Result<Runtime> {
    match mode {
        ClockMode::Virtual => Builder::new_current_thread()
            .enable_time()
            .start_paused(true)
            .build(),
        ClockMode::Wall => Builder::new_multi_thread().enable_all().build(),
    }
}

/// Runtime time units per simulated time unit under [`ClockMode::Virtual`].
pub const VIRTUAL_SCALE: u32 = 1000;

/// A monotonic clock measuring time since its own origin.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    origin: Instant,
    mode: ClockMode,
}

impl Clock {
    /// Starts a clock at the current instant of the ambient runtime.
    ///
    /// For a virtual clock this must be called from inside the paused runtime.
    pub fn start(mode: ClockMode) -> Self {
        Self {
            origin: Instant::now(),
            mode,
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    /// Time elapsed since the clock started.
    pub fn now(&self) -> Duration {
        let raw = Instant::now().saturating_duration_since(self.origin);
        match self.mode {
            ClockMode::Virtual => raw / VIRTUAL_SCALE,
            ClockMode::Wall => raw,
        }
    }

    fn runtime_span(self, d: Duration) -> Duration {
        match self.mode {
            ClockMode::Virtual => d.saturating_mul(VIRTUAL_SCALE),
            ClockMode::Wall => d,
        }
    }

    pub async fn sleep(&self, d: Duration) {
        if !d.is_zero() {
            tokio::time::sleep(self.runtime_span(d)).await;
        }
    }

    /// Sleeps until the clock reads `at`; returns immediately if already past.
    pub async fn sleep_until(&self, at: Duration) {
        let deadline = self
            .origin
            .checked_add(self.runtime_span(at))
            .unwrap_or_else(|| Instant::now() + Duration::from_secs(86_400 * 365));
        tokio::time::sleep_until(deadline).await;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_sleep_is_exact_and_instant() {
        let rt = runtime(ClockMode::Virtual).unwrap();
        let wall = std::time::Instant::now();
        let elapsed = rt.block_on(async {
            let clock = Clock::start(ClockMode::Virtual);
            clock.sleep(Duration::from_secs(30)).await;
            clock.sleep(Duration::from_millis(100)).await;
            clock.now()
        });
        assert_eq!(elapsed, Duration::from_millis(30_100));
        assert!(wall.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn virtual_concurrent_sleeps_overlap() {
        let rt = runtime(ClockMode::Virtual).unwrap();
        let elapsed = rt.block_on(async {
            let clock = Clock::start(ClockMode::Virtual);
            let a = tokio::spawn(async move { clock.sleep(Duration::from_millis(100)).await });
            let b = tokio::spawn(async move { clock.sleep(Duration::from_millis(100)).await });
            a.await.unwrap();
            b.await.unwrap();
            clock.now()
        });
        assert_eq!(elapsed, Duration::from_millis(100));
    }

    #[test]
    fn virtual_sleeps_resolve_microseconds() {
        let rt = runtime(ClockMode::Virtual).unwrap();
        let (a, b) = rt.block_on(async {
            let clock = Clock::start(ClockMode::Virtual);
            clock.sleep(Duration::from_micros(250)).await;
            let a = clock.now();
            clock.sleep_until(Duration::from_micros(1_730)).await;
            (a, clock.now())
        });
        assert_eq!(a, Duration::from_micros(250));
        assert_eq!(b, Duration::from_micros(1_730));
    }

    #[test]
    fn mode_parses() {
        assert_eq!("virtual".parse::<ClockMode>().unwrap(), ClockMode::Virtual);
        assert!("lunar".parse::<ClockMode>().is_err());
    }
}
