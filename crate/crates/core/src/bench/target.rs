//! What the load generator and the auditor talk to: a worker in this process,
//! or any HTTP server.

use std::fmt;
use std::time::Duration;

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::clock::Clock;
use crate::edge::{CacheStatus, EdgeWorker, Response, HEADER_CACHE, HEADER_DEPLOY, HEADER_SERVER_TIME};
use crate::ssg::DeployId;

/// Admin endpoint that empties a served worker's cache.
pub const ADMIN_PURGE: &str = "/__edge/purge";
/// Admin endpoint that marks a served worker cold.
pub const ADMIN_COLD: &str = "/__edge/cold";
/// Admin endpoint reporting worker counters as JSON.
pub const ADMIN_STATS: &str = "/__edge/stats";

/// Simulated client-to-worker hop for in-process targets: half the round
/// trip before the request, half after, plus uniform jitter in `0..=jitter`
/// on the way in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimLink {
    #[serde(with = "crate::serde_ms")]
    pub rtt: Duration,
    #[serde(with = "crate::serde_ms")]
    pub jitter: Duration,
    pub seed: u64,
}

impl Default for SimLink {
    fn default() -> Self {
        Self {
            rtt: Duration::from_millis(1),
            jitter: Duration::from_micros(500),
            seed: 0,
        }
    }
}

impl SimLink {
    pub fn zero() -> Self {
        Self {
            rtt: Duration::ZERO,
            jitter: Duration::ZERO,
            seed: 0,
        }
    }
}

#[derive(Clone)]
pub enum Target {
    InProcess { worker: EdgeWorker, link: SimLink },
    Http { base: reqwest::Url },
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target({self})")
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::InProcess { worker, .. } => {
                write!(f, "in-process {}", worker.config().strategy)
            }
            Target::Http { base } => write!(f, "{base}"),
        }
    }
}

/// Parses the in-band admin reply `{"purged": n}`.
#[derive(Debug, Deserialize)]
struct Purged {
    purged: usize,
}

impl Target {
    pub fn in_process(worker: EdgeWorker, link: SimLink) -> Self {
        Target::InProcess { worker, link }
    }

    pub fn http(url: &str) -> Result<Self, BenchError> {
        let base = reqwest::Url::parse(url)
            .map_err(|e| BenchError::InvalidConfig(format!("bad target URL `{url}`: {e}")))?;
        if !matches!(base.scheme(), "http" | "https") {
            return Err(BenchError::InvalidConfig(format!("unsupported scheme in `{url}`")));
        }
        Ok(Target::Http { base })
    }

    pub(crate) fn connection(&self, index: usize) -> Result<Connection, BenchError> {
        Ok(match self {
            Target::InProcess { worker, link } => Connection::InProcess {
                worker: worker.clone(),
                link: *link,
                rng: Box::new(ChaCha8Rng::seed_from_u64(link.seed ^ (index as u64).wrapping_mul(0x9E37_79B9))),
            },
            Target::Http { base } => Connection::Http {
                client: http_client(1)?,
                base: base.clone(),
            },
        })
    }

    /// Empties the cache and/or marks the worker cold. Returns the number of
    /// purged entries when a purge was requested.
    pub async fn reset(&self, purge: bool, cold: bool) -> Result<Option<usize>, BenchError> {
        match self {
            Target::InProcess { worker, .. } => {
                let purged = purge.then(|| worker.purge_cache());
                if cold {
                    worker.cold_worker();
                }
                Ok(purged)
            }
            Target::Http { base } => {
                let client = http_client(1)?;
                let mut purged = None;
                if purge {
                    let url = join(base, ADMIN_PURGE)?;
                    let reply = client
                        .post(url)
                        .send()
                        .await
                        .and_then(|r| r.error_for_status())
                        .map_err(|e| BenchError::ResetFailed(e.to_string()))?;
                    let bytes = reply
                        .bytes()
                        .await
                        .map_err(|e| BenchError::ResetFailed(e.to_string()))?;
                    let body: Purged = serde_json::from_slice(&bytes)
                        .map_err(|e| BenchError::ResetFailed(e.to_string()))?;
                    purged = Some(body.purged);
                }
                if cold {
                    let url = join(base, ADMIN_COLD)?;
                    client
                        .post(url)
                        .send()
                        .await
                        .and_then(|r| r.error_for_status())
                        .map_err(|e| BenchError::ResetFailed(e.to_string()))?;
                }
                Ok(purged)
            }
        }
    }
}

fn http_client(connections: usize) -> Result<reqwest::Client, BenchError> {
    reqwest::Client::builder()
        .pool_max_idle_per_host(connections)
        .no_proxy()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| BenchError::InvalidConfig(e.to_string()))
}

fn join(base: &reqwest::Url, path: &str) -> Result<reqwest::Url, BenchError> {
    base.join(path)
        .map_err(|e| BenchError::InvalidConfig(format!("cannot join `{path}`: {e}")))
}

/// One closed-loop connection.
pub(crate) enum Connection {
    InProcess {
        worker: EdgeWorker,
        link: SimLink,
        rng: Box<ChaCha8Rng>,
    },
    Http {
        client: reqwest::Client,
        base: reqwest::Url,
    },
}

impl Connection {
    pub(crate) async fn request(&mut self, path: &str, clock: &Clock) -> Result<Response, String> {
        match self {
            Connection::InProcess { worker, link, rng } => {
                let jitter = if link.jitter.is_zero() {
                    Duration::ZERO
                } else {
                    Duration::from_nanos(rng.random_range(0..=link.jitter.as_nanos() as u64))
                };
                clock.sleep(link.rtt / 2 + jitter).await;
                let resp = worker.handle(path).await;
                clock.sleep(link.rtt - link.rtt / 2).await;
                Ok(resp)
            }
            Connection::Http { client, base } => {
                let url = base.join(path).map_err(|e| e.to_string())?;
                let reply = client.get(url).send().await.map_err(|e| e.to_string())?;
                let status = reply.status().as_u16();
                let headers = reply.headers().clone();
                let body: Bytes = reply.bytes().await.map_err(|e| e.to_string())?;
                Ok(response_from_parts(status, &headers, body))
            }
        }
    }
}

fn response_from_parts(status: u16, headers: &reqwest::header::HeaderMap, body: Bytes) -> Response {
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok());
    Response {
        status,
        body,
        server_time: header(HEADER_SERVER_TIME)
            .and_then(|v| v.parse().ok())
            .map(Duration::from_micros)
            .unwrap_or_default(),
        cache_status: header(HEADER_CACHE)
            .and_then(|v| v.parse().ok())
            .unwrap_or(CacheStatus::Bypass),
        deploy_id: header(HEADER_DEPLOY)
            .and_then(|v| v.trim_start_matches('v').parse().ok())
            .map(DeployId),
    }
}
