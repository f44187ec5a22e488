use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use bytes::Bytes;
use serde::Serialize;

use super::kv::{CacheEntry, CacheKey, KvStore};
use super::{CacheStatus, EdgeError, Response, Strategy, StrategyConfig};
use crate::clock::Clock;
use crate::content::Upstream;
use crate::ssg::{render_index, render_post, DeployId, RenderedPage, Route, SiteBuild};

struct Deployment {
    build: Arc<SiteBuild>,
    upstream: Upstream,
}

#[derive(Debug, Default)]
struct Counters {
    requests: AtomicU64,
    renders: AtomicU64,
    revalidations: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WorkerStats {
    pub requests: u64,
    pub renders: u64,
    pub revalidations: u64,
    pub cache_entries: usize,
    pub deploy_id: Option<DeployId>,
}

struct Inner {
    cfg: StrategyConfig,
    clock: Clock,
    current: RwLock<Option<Arc<Deployment>>>,
    kv: KvStore,
    cold: AtomicBool,
    revalidating: Mutex<HashSet<String>>,
    upstream_down: AtomicBool,
    counters: Counters,
}

/// One edge worker instance. Cheap to clone; clones share all state.
#[derive(Clone)]
pub struct EdgeWorker {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for EdgeWorker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EdgeWorker")
            .field("strategy", &self.inner.cfg.strategy)
            .field("stats", &self.stats())
            .finish()
    }
}

impl EdgeWorker {
    /// A fresh worker starts cold.
    pub fn new(cfg: StrategyConfig, clock: Clock) -> Result<Self, EdgeError> {
        cfg.validate()?;
        Ok(Self {
            inner: Arc::new(Inner {
                cfg,
                clock,
                current: RwLock::new(None),
                kv: KvStore::new(),
                cold: AtomicBool::new(true),
                revalidating: Mutex::new(HashSet::new()),
                upstream_down: AtomicBool::new(false),
                counters: Counters::default(),
            }),
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.inner.cfg
    }

    pub fn clock(&self) -> &Clock {
        &self.inner.clock
    }

    pub fn current_deploy(&self) -> Option<DeployId> {
        self.inner.snapshot().map(|d| d.build.deploy_id())
    }

    pub fn current_build(&self) -> Option<Arc<SiteBuild>> {
        self.inner.snapshot().map(|d| d.build.clone())
    }

    /// Atomically replaces the live deploy. Requests that already took a
    /// snapshot finish against it; later ones see only `build`. Under DPR,
    /// entries from earlier deploys are dropped in the same critical section.
    pub fn deploy(&self, build: Arc<SiteBuild>) -> Result<(), EdgeError> {
        let mut current = self.inner.current.write().unwrap();
        if let Some(dep) = current.as_ref() {
            let cur = dep.build.deploy_id();
            if build.deploy_id() <= cur {
                return Err(EdgeError::StaleDeploy {
                    current: cur,
                    attempted: build.deploy_id(),
                });
            }
        }
        let id = build.deploy_id();
        let upstream = Upstream::new(build.posts().clone(), self.inner.cfg.upstream_delay);
        *current = Some(Arc::new(Deployment { build, upstream }));
        if self.inner.cfg.strategy == Strategy::Dpr {
            self.inner.kv.retain(|k, _| k.deploy == Some(id));
        }
        Ok(())
    }

    /// Empties the cache; returns how many entries were removed.
    pub fn purge_cache(&self) -> usize {
        self.inner.kv.clear()
    }

    /// Marks the worker cold: the next request (only) pays the cold start
    /// penalty.
    pub fn cold_worker(&self) {
        self.inner.cold.store(true, Ordering::SeqCst);
    }

    /// Fault injection: while set, every upstream fetch fails.
    pub fn set_upstream_down(&self, down: bool) {
        self.inner.upstream_down.store(down, Ordering::SeqCst);
    }

    pub fn stats(&self) -> WorkerStats {
        let c = &self.inner.counters;
        WorkerStats {
            requests: c.requests.load(Ordering::SeqCst),
            renders: c.renders.load(Ordering::SeqCst),
            revalidations: c.revalidations.load(Ordering::SeqCst),
            cache_entries: self.inner.kv.len(),
            deploy_id: self.current_deploy(),
        }
    }

    pub fn cache_entry(&self, key: &CacheKey) -> Option<CacheEntry> {
        self.inner.kv.get(key)
    }

    /// Serves one request.
    pub async fn handle(&self, path: &str) -> Response {
        let inner = &self.inner;
        let clock = inner.clock;
        let arrival = clock.now();
        inner.counters.requests.fetch_add(1, Ordering::SeqCst);

        if inner.cold.swap(false, Ordering::SeqCst) {
            clock.sleep(inner.cfg.cold_start_penalty).await;
        }
        clock.sleep(inner.cfg.base_handling).await;

        let served = match inner.snapshot() {
            None => Err(EdgeError::NotDeployed),
            Some(dep) => self.serve(&dep, path).await,
        };
        let server_time = clock.now() - arrival;

        match served {
            Ok((page, cache_status, deploy_id)) => Response {
                status: 200,
                body: page.body().clone(),
                server_time,
                cache_status,
                deploy_id: Some(deploy_id),
            },
            Err(e) => Response {
                status: e.status(),
                body: Bytes::from(format!("{e}\n")),
                server_time,
                cache_status: CacheStatus::Bypass,
                deploy_id: None,
            },
        }
    }

    async fn serve(
        &self,
        dep: &Arc<Deployment>,
        path: &str,
    ) -> Result<(RenderedPage, CacheStatus, DeployId), EdgeError> {
        let inner = &self.inner;
        let not_found = || EdgeError::NotFound(path.to_string());
        let route = Route::parse(path).ok_or_else(not_found)?;
        let canonical = dep.build.resolve(&route).ok_or_else(not_found)?;
        let deploy_id = dep.build.deploy_id();
        let ttl = inner.cfg.effective_ttl();

        match inner.cfg.strategy {
            Strategy::Static => {
                let page = dep.build.page(&canonical).ok_or_else(not_found)?;
                Ok((page.clone(), CacheStatus::Bypass, deploy_id))
            }
            Strategy::Ssr => {
                let page = inner.render(dep, &route).await?;
                Ok((page, CacheStatus::Bypass, deploy_id))
            }
            Strategy::Isr | Strategy::Dpr => {
                let key = inner.key_for(&canonical, deploy_id);
                if let Some(entry) = inner.lookup(&key).await {
                    if !entry.is_stale(inner.clock.now(), ttl) {
                        return Ok((entry.page, CacheStatus::Hit, entry.deploy_id));
                    }
                }
                let page = inner.render(dep, &route).await?;
                inner.store(key, &canonical, &page, deploy_id);
                Ok((page, CacheStatus::Miss, deploy_id))
            }
            Strategy::Swr => {
                let key = inner.key_for(&canonical, deploy_id);
                match inner.lookup(&key).await {
                    Some(entry) if !entry.is_stale(inner.clock.now(), ttl) => {
                        Ok((entry.page, CacheStatus::Hit, entry.deploy_id))
                    }
                    Some(entry) => {
                        self.spawn_revalidation(key, canonical, route);
                        Ok((entry.page, CacheStatus::Stale, entry.deploy_id))
                    }
                    None => {
                        let page = inner.render(dep, &route).await?;
                        inner.store(key, &canonical, &page, deploy_id);
                        Ok((page, CacheStatus::Miss, deploy_id))
                    }
                }
            }
        }
    }

    /// Starts a background refresh of `path` unless one is already running.
    fn spawn_revalidation(&self, key: CacheKey, path: String, route: Route) {
        if !self.inner.revalidating.lock().unwrap().insert(path.clone()) {
            return;
        }
        self.inner
            .counters
            .revalidations
            .fetch_add(1, Ordering::SeqCst);
        let inner = self.inner.clone();
        tokio::spawn(async move {
            if let Some(dep) = inner.snapshot() {
                match inner.render(&dep, &route).await {
                    Ok(page) => inner.store(key, &path, &page, dep.build.deploy_id()),
                    Err(e) => tracing::warn!(path = %path, error = %e, "revalidation failed"),
                }
            }
            inner.revalidating.lock().unwrap().remove(&path);
        });
    }
}

impl Inner {
    fn snapshot(&self) -> Option<Arc<Deployment>> {
        self.current.read().unwrap().clone()
    }

    fn key_for(&self, path: &str, deploy: DeployId) -> CacheKey {
        match self.cfg.strategy {
            Strategy::Dpr => CacheKey::scoped(path, deploy),
            _ => CacheKey::path(path),
        }
    }

    async fn lookup(&self, key: &CacheKey) -> Option<CacheEntry> {
        self.clock.sleep(self.cfg.kv_read_delay).await;
        self.kv.get(key)
    }

    fn store(&self, key: CacheKey, path: &str, page: &RenderedPage, deploy_id: DeployId) {
        let entry = CacheEntry {
            path: path.to_string(),
            page: page.clone(),
            stored_at: self.clock.now(),
            deploy_id,
        };
        if self.cfg.strategy == Strategy::Dpr {
            // Holding the read lock orders this write against deploy()'s sweep.
            let current = self.current.read().unwrap();
            if current.as_ref().map(|d| d.build.deploy_id()) != Some(deploy_id) {
                return;
            }
            self.kv.put_if_newer(key, entry);
        } else {
            self.kv.put_if_newer(key, entry);
        }
    }

    async fn render(&self, dep: &Deployment, route: &Route) -> Result<RenderedPage, EdgeError> {
        if self.upstream_down.load(Ordering::SeqCst) {
            return Err(EdgeError::Upstream("content API unavailable".into()));
        }
        self.counters.renders.fetch_add(1, Ordering::SeqCst);
        match route {
            Route::Index => {
                let posts = dep.upstream.fetch_all(&self.clock).await;
                Ok(render_index(&posts))
            }
            Route::Post(id) => {
                let post = dep
                    .upstream
                    .fetch(*id, &self.clock)
                    .await
                    .map_err(|e| EdgeError::Upstream(e.to_string()))?;
                Ok(render_post(&post))
            }
        }
    }
}
