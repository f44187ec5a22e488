mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{deployed, posts, simulate, site};
use edgelab::content::Post;
use edgelab::edge::{CacheStatus, EdgeError, EdgeWorker, Strategy, StrategyConfig};
use edgelab::ssg::{build_site, incremental_rebuild, DeployId};

const MS: Duration = Duration::from_millis(1);

#[test]
fn isr_miss_then_hit() {
    simulate(|clock| async move {
        let w = deployed(StrategyConfig::new(Strategy::Isr), clock, site(5));
        let first = w.handle("/posts/post-1").await;
        assert_eq!(first.status, 200);
        assert_eq!(first.cache_status, CacheStatus::Miss);
        assert_eq!(first.server_time, 100 * MS);
        let second = w.handle("/posts/post-1").await;
        assert_eq!(second.cache_status, CacheStatus::Hit);
        assert_eq!(second.server_time, Duration::ZERO);
        assert_eq!(first.body, second.body);
    });
}

#[test]
fn isr_aliases_share_one_entry() {
    simulate(|clock| async move {
        let w = deployed(StrategyConfig::new(Strategy::Isr), clock, site(3));
        assert_eq!(w.handle("/").await.cache_status, CacheStatus::Miss);
        assert_eq!(w.handle("/index.html").await.cache_status, CacheStatus::Hit);
        assert_eq!(w.handle("/posts/post-2").await.cache_status, CacheStatus::Miss);
        assert_eq!(w.handle("/posts/post-2/").await.cache_status, CacheStatus::Hit);
        assert_eq!(w.stats().cache_entries, 2);
    });
}

#[test]
fn isr_ttl_expiry_rerenders() {
    simulate(|clock| async move {
        let cfg = StrategyConfig::new(Strategy::Isr).with_ttl(Some(Duration::from_secs(1)));
        let w = deployed(cfg, clock, site(3));
        assert_eq!(w.handle("/").await.cache_status, CacheStatus::Miss);
        clock.sleep(Duration::from_millis(500)).await;
        assert_eq!(w.handle("/").await.cache_status, CacheStatus::Hit);
        clock.sleep(Duration::from_secs(1)).await;
        let r = w.handle("/").await;
        assert_eq!(r.cache_status, CacheStatus::Miss);
        assert_eq!(r.server_time, 100 * MS);
    });
}

#[test]
fn ssr_always_renders() {
    simulate(|clock| async move {
        let w = deployed(StrategyConfig::new(Strategy::Ssr), clock, site(3));
        for _ in 0..3 {
            let r = w.handle("/").await;
            assert_eq!(r.cache_status, CacheStatus::Bypass);
            assert_eq!(r.server_time, 100 * MS);
        }
        assert_eq!(w.stats().renders, 3);
        assert_eq!(w.stats().cache_entries, 0);
    });
}

#[test]
fn static_serves_build_output() {
    simulate(|clock| async move {
        let build = site(4);
        let w = deployed(StrategyConfig::new(Strategy::Static), clock, build.clone());
        let r = w.handle("/posts/post-3").await;
        assert_eq!(r.status, 200);
        assert_eq!(r.cache_status, CacheStatus::Bypass);
        assert_eq!(r.server_time, Duration::ZERO);
        assert_eq!(&r.body, build.page("/posts/post-3").unwrap().body());
        assert_eq!(w.stats().renders, 0);
    });
}

#[test]
fn rendered_output_matches_static_build() {
    simulate(|clock| async move {
        let build = site(6);
        for strategy in Strategy::ALL {
            let w = deployed(StrategyConfig::new(strategy), clock, build.clone());
            for (path, page) in build.pages() {
                let r = w.handle(path).await;
                assert_eq!(&r.body, page.body(), "{strategy} {path}");
                assert_eq!(r.deploy_id, Some(build.deploy_id()));
            }
        }
    });
}

#[test]
fn server_time_decomposes_into_configured_delays() {
    simulate(|clock| async move {
        let mut cfg = StrategyConfig::new(Strategy::Isr)
            .with_cold_start(Duration::from_millis(40))
            .with_upstream_delay(Duration::from_millis(70));
        cfg.base_handling = Duration::from_micros(300);
        cfg.kv_read_delay = Duration::from_micros(150);
        let w = deployed(cfg, clock, site(3));
        let cold_miss = w.handle("/").await;
        assert_eq!(cold_miss.server_time, Duration::from_micros(40_000 + 300 + 150 + 70_000));
        let warm_hit = w.handle("/").await;
        assert_eq!(warm_hit.server_time, Duration::from_micros(300 + 150));
    });
}

#[test]
fn cold_start_applies_once_per_cold_event() {
    simulate(|clock| async move {
        let cfg = StrategyConfig::new(Strategy::Static).with_cold_start(Duration::from_millis(100));
        let w = deployed(cfg, clock, site(2));
        assert_eq!(w.handle("/").await.server_time, 100 * MS);
        assert_eq!(w.handle("/").await.server_time, Duration::ZERO);
        w.cold_worker();
        assert_eq!(w.handle("/").await.server_time, 100 * MS);
        assert_eq!(w.handle("/").await.server_time, Duration::ZERO);
    });
}

#[test]
fn concurrent_requests_pay_cold_start_once() {
    simulate(|clock| async move {
        let cfg = StrategyConfig::new(Strategy::Static).with_cold_start(Duration::from_millis(100));
        let w = deployed(cfg, clock, site(2));
        let tasks: Vec<_> = (0..10)
            .map(|_| {
                let w = w.clone();
                tokio::spawn(async move { w.handle("/").await.server_time })
            })
            .collect();
        let mut cold = 0;
        for t in tasks {
            if t.await.unwrap() > Duration::ZERO {
                cold += 1;
            }
        }
        assert_eq!(cold, 1);
    });
}

#[test]
fn purge_reports_entry_count() {
    simulate(|clock| async move {
        let w = deployed(StrategyConfig::new(Strategy::Isr), clock, site(5));
        for p in ["/", "/posts/post-0", "/posts/post-1"] {
            w.handle(p).await;
        }
        assert_eq!(w.purge_cache(), 3);
        assert_eq!(w.purge_cache(), 0);
        assert_eq!(w.handle("/").await.cache_status, CacheStatus::Miss);
    });
}

#[test]
fn unknown_paths_are_404_bypass() {
    simulate(|clock| async move {
        for strategy in Strategy::ALL {
            let w = deployed(StrategyConfig::new(strategy), clock, site(3));
            for p in ["/posts/post-3", "/posts/nope", "/about", "/posts/post-01"] {
                let r = w.handle(p).await;
                assert_eq!(r.status, 404, "{strategy} {p}");
                assert_eq!(r.cache_status, CacheStatus::Bypass);
            }
            assert_eq!(w.stats().cache_entries, 0);
        }
    });
}

#[test]
fn upstream_outage_is_502_and_not_cached() {
    simulate(|clock| async move {
        let w = deployed(StrategyConfig::new(Strategy::Isr), clock, site(3));
        w.set_upstream_down(true);
        let r = w.handle("/").await;
        assert_eq!(r.status, 502);
        assert_eq!(r.cache_status, CacheStatus::Bypass);
        assert_eq!(w.stats().cache_entries, 0);
        w.set_upstream_down(false);
        assert_eq!(w.handle("/").await.status, 200);
    });
}

#[test]
fn static_ignores_upstream_outage() {
    simulate(|clock| async move {
        let w = deployed(StrategyConfig::new(Strategy::Static), clock, site(3));
        w.set_upstream_down(true);
        assert_eq!(w.handle("/").await.status, 200);
    });
}

#[test]
fn undeployed_worker_is_503() {
    simulate(|clock| async move {
        let w = EdgeWorker::new(StrategyConfig::new(Strategy::Ssr), clock).unwrap();
        let r = w.handle("/").await;
        assert_eq!(r.status, 503);
        assert_eq!(r.deploy_id, None);
    });
}

#[test]
fn swr_serves_stale_and_revalidates_in_background() {
    simulate(|clock| async move {
        let cfg = StrategyConfig::new(Strategy::Swr).with_ttl(Some(Duration::from_secs(1)));
        let w = deployed(cfg, clock, site(3));
        assert_eq!(w.handle("/").await.cache_status, CacheStatus::Miss);
        clock.sleep_until(Duration::from_secs(2)).await;
        let stale = w.handle("/").await;
        assert_eq!(stale.cache_status, CacheStatus::Stale);
        assert_eq!(stale.server_time, Duration::ZERO);
        assert_eq!(w.stats().revalidations, 1);
        clock.sleep(150 * MS).await;
        let fresh = w.handle("/").await;
        assert_eq!(fresh.cache_status, CacheStatus::Hit);
        assert_eq!(w.stats().renders, 2);
    });
}

#[test]
fn swr_deduplicates_concurrent_revalidation() {
    simulate(|clock| async move {
        let cfg = StrategyConfig::new(Strategy::Swr).with_ttl(Some(Duration::from_secs(1)));
        let w = deployed(cfg, clock, site(3));
        w.handle("/").await;
        clock.sleep(Duration::from_secs(2)).await;
        let tasks: Vec<_> = (0..100)
            .map(|_| {
                let w = w.clone();
                tokio::spawn(async move { w.handle("/").await.cache_status })
            })
            .collect();
        for t in tasks {
            assert_eq!(t.await.unwrap(), CacheStatus::Stale);
        }
        assert_eq!(w.stats().revalidations, 1);
    });
}

#[test]
fn swr_requires_finite_ttl() {
    simulate(|clock| async move {
        let cfg = StrategyConfig::new(Strategy::Swr).with_ttl(None);
        assert!(matches!(EdgeWorker::new(cfg, clock), Err(EdgeError::InvalidConfig(_))));
    });
}

fn edited(mut posts: Vec<Post>, id: usize) -> Vec<Post> {
    posts[id].body.push_str(" Edited.");
    posts
}

#[test]
fn redeploy_rejects_stale_ids() {
    simulate(|clock| async move {
        let v1 = site(3);
        let w = deployed(StrategyConfig::new(Strategy::Dpr), clock, v1.clone());
        let err = w.deploy(v1.clone()).unwrap_err();
        assert!(matches!(err, EdgeError::StaleDeploy { .. }));
        let (v2, _) = incremental_rebuild(&v1, &posts(3));
        w.deploy(Arc::new(v2)).unwrap();
        assert!(w.deploy(v1).is_err());
        assert_eq!(w.current_deploy(), Some(DeployId(2)));
    });
}

#[test]
fn isr_keeps_serving_old_content_after_deploy() {
    simulate(|clock| async move {
        let v1 = site(3);
        let w = deployed(StrategyConfig::new(Strategy::Isr), clock, v1.clone());
        let before = w.handle("/posts/post-1").await;
        let (v2, rebuilt) = incremental_rebuild(&v1, &edited(posts(3), 1));
        assert!(rebuilt.contains("/posts/post-1"));
        w.deploy(Arc::new(v2)).unwrap();
        let after = w.handle("/posts/post-1").await;
        assert_eq!(after.cache_status, CacheStatus::Hit);
        assert_eq!(after.body, before.body);
        assert_eq!(after.deploy_id, Some(DeployId(1)));
    });
}

#[test]
fn dpr_switches_atomically_and_collects_old_entries() {
    simulate(|clock| async move {
        let v1 = site(3);
        let w = deployed(StrategyConfig::new(Strategy::Dpr), clock, v1.clone());
        w.handle("/").await;
        w.handle("/posts/post-1").await;
        assert_eq!(w.stats().cache_entries, 2);

        let (v2, _) = incremental_rebuild(&v1, &edited(posts(3), 1));
        let v2 = Arc::new(v2);
        w.deploy(v2.clone()).unwrap();
        assert_eq!(w.stats().cache_entries, 0);

        let r = w.handle("/posts/post-1").await;
        assert_eq!(r.cache_status, CacheStatus::Miss);
        assert_eq!(r.deploy_id, Some(v2.deploy_id()));
        assert_eq!(&r.body, v2.page("/posts/post-1").unwrap().body());
        assert_eq!(w.handle("/posts/post-1").await.cache_status, CacheStatus::Hit);
    });
}

#[test]
fn dpr_in_flight_render_never_leaks_into_new_deploy() {
    simulate(|clock| async move {
        let v1 = site(3);
        let w = deployed(StrategyConfig::new(Strategy::Dpr), clock, v1.clone());
        let slow = {
            let w = w.clone();
            tokio::spawn(async move { w.handle("/posts/post-0").await })
        };
        clock.sleep(50 * MS).await;
        let v2 = Arc::new(build_site(&edited(posts(3), 0), v1.deploy_id()));
        w.deploy(v2.clone()).unwrap();
        let old = slow.await.unwrap();
        assert_eq!(old.deploy_id, Some(v1.deploy_id()));
        assert_eq!(w.stats().cache_entries, 0);
        let new = w.handle("/posts/post-0").await;
        assert_eq!(new.cache_status, CacheStatus::Miss);
        assert_eq!(new.deploy_id, Some(v2.deploy_id()));
        assert_eq!(&new.body, v2.page("/posts/post-0").unwrap().body());
    });
}
