#![allow(dead_code)]

use std::future::Future;
use std::sync::Arc;

use edgelab::clock::runtime;
use edgelab::content::{generate_posts, Post, Seed};
use edgelab::edge::{EdgeWorker, StrategyConfig};
use edgelab::ssg::{build_site, DeployId, SiteBuild};
use edgelab::{Clock, ClockMode};

/// Runs `f` on a paused runtime with a fresh virtual clock.
pub fn simulate<F, Fut>(f: F) -> Fut::Output
where
    F: FnOnce(Clock) -> Fut,
    Fut: Future,
{
    let rt = runtime(ClockMode::Virtual).expect("runtime");
    rt.block_on(async { f(Clock::start(ClockMode::Virtual)).await })
}

pub fn posts(count: usize) -> Vec<Post> {
    generate_posts(Seed(42), count)
}

pub fn site(count: usize) -> Arc<SiteBuild> {
    Arc::new(build_site(&posts(count), DeployId(0)))
}

/// A fresh (cold) worker with `build` deployed.
pub fn deployed(cfg: StrategyConfig, clock: Clock, build: Arc<SiteBuild>) -> EdgeWorker {
    let worker = EdgeWorker::new(cfg, clock).expect("valid config");
    worker.deploy(build).expect("first deploy");
    worker
}
