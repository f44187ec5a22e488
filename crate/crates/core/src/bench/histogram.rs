//! Latency histogram over 1 µs .. 60 s with nearest-rank percentiles.
//!
//! Backed by an HDR histogram at 3 significant digits. Percentiles report the
//! midpoint of the bucket holding the nearest-rank sample, clamped into the
//! observed `[min, max]`, which keeps relative error well under 1%. `p = 100`
//! returns the exact maximum.

use std::time::Duration;

use hdrhistogram::Histogram;

use super::BenchError;

pub const LOWEST: Duration = Duration::from_micros(1);
pub const HIGHEST: Duration = Duration::from_secs(60);

const LOWEST_NS: u64 = 1_000;
const HIGHEST_NS: u64 = 60_000_000_000;

#[derive(Debug, Clone)]
pub struct LatencyHistogram {
    hist: Histogram<u64>,
    count: u64,
    sum_ns: u128,
    min_ns: u64,
    max_ns: u64,
    clamped: u64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Nearest rank (1-based) of percentile `p` among `n` samples.
fn nearest_rank(p: f64, n: u64) -> u64 {
    let rank = (p / 100.0 * n as f64 - 1e-9).ceil();
    (rank.max(1.0) as u64).min(n)
}

impl LatencyHistogram {
    pub fn new() -> Self {
        Self {
            // A discernible floor of 1 ns keeps 3 significant digits all the
            // way down; hdrhistogram would otherwise bucket in 512 ns units.
            hist: Histogram::new_with_bounds(1, HIGHEST_NS, 3)
                .expect("static histogram bounds are valid"),
            count: 0,
            sum_ns: 0,
            min_ns: u64::MAX,
            max_ns: 0,
            clamped: 0,
        }
    }

    /// Records one sample. Samples outside 1 µs .. 60 s are clamped to the
    /// nearest bound and counted in [`clamped`](Self::clamped).
    pub fn record(&mut self, sample: Duration) {
        let raw = sample.as_nanos().min(u64::MAX as u128) as u64;
        let ns = raw.clamp(LOWEST_NS, HIGHEST_NS);
        if ns != raw {
            self.clamped += 1;
        }
        self.hist
            .record(ns)
            .expect("clamped value is within histogram bounds");
        self.count += 1;
        self.sum_ns += ns as u128;
        self.min_ns = self.min_ns.min(ns);
        self.max_ns = self.max_ns.max(ns);
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn clamped(&self) -> u64 {
        self.clamped
    }

    pub fn max(&self) -> Option<Duration> {
        (self.count > 0).then(|| Duration::from_nanos(self.max_ns))
    }

    pub fn min(&self) -> Option<Duration> {
        (self.count > 0).then(|| Duration::from_nanos(self.min_ns))
    }

    pub fn mean(&self) -> Option<Duration> {
        (self.count > 0).then(|| Duration::from_nanos((self.sum_ns / self.count as u128) as u64))
    }

    pub fn percentile(&self, p: f64) -> Result<Duration, BenchError> {
        if !(p > 0.0 && p <= 100.0) {
            return Err(BenchError::InvalidPercentile(p));
        }
        if self.count == 0 {
            return Err(BenchError::EmptyHistogram);
        }
        if p == 100.0 {
            return Ok(Duration::from_nanos(self.max_ns));
        }
        let rank = nearest_rank(p, self.count);
        let mut seen = 0u64;
        for step in self.hist.iter_recorded() {
            seen += step.count_since_last_iteration();
            if seen >= rank {
                let mid = self.hist.median_equivalent(step.value_iterated_to());
                return Ok(Duration::from_nanos(mid.clamp(self.min_ns, self.max_ns)));
            }
        }
        Ok(Duration::from_nanos(self.max_ns))
    }

    pub fn merge(&mut self, other: &LatencyHistogram) {
        self.hist
            .add(&other.hist)
            .expect("histograms share bounds");
        self.count += other.count;
        self.sum_ns += other.sum_ns;
        self.min_ns = self.min_ns.min(other.min_ns);
        self.max_ns = self.max_ns.max(other.max_ns);
        self.clamped += other.clamped;
    }
}
