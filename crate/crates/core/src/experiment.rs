//! The full protocol: build, deploy every variant, audit each page, then run
//! sustained load; emit tables and a machine-readable summary.
//!
//! Deterministic runs use the virtual clock with in-process targets; other
//! runs serve each variant over loopback HTTP on an ephemeral port.

use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{
    compare, run_audit, run_load, AuditReport, BenchError, BenchReport, ComparisonTable, Report,
    SimLink, Target,
};
use crate::clock::{runtime, Clock, ClockMode};
use crate::config::{ConfigError, ExperimentConfig};
use crate::content::generate_posts_with;
use crate::edge::{EdgeError, EdgeWorker, Strategy};
use crate::netmodel::ThrottleProfile;
use crate::server::{spawn_variant, ServerHandle};
use crate::ssg::{build_site, DeployId, SiteBuild, INDEX_PATH};

pub const SUMMARY_FILE: &str = "summary.json";
pub const AUDIT_MD: &str = "audit.md";
pub const AUDIT_CSV: &str = "audit.csv";
pub const PERCENTILES_CSV: &str = "percentiles.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("variant `{variant}`: {source}")]
    Unreachable { variant: String, source: BenchError },
    #[error("variant `{variant}`: {source}")]
    Edge { variant: String, source: EdgeError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    pub strategy: Strategy,
    pub audits: Vec<AuditReport>,
    pub bench: BenchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub clock: ClockMode,
    pub config_digest: String,
    pub source_digest: String,
    pub profile: ThrottleProfile,
    /// Present for deterministic (in-process) runs.
    pub link: Option<SimLink>,
    pub config: ExperimentConfig,
    pub variants: Vec<VariantResult>,
}

/// Row label for an audited page: `index` for the root, else the last path
/// segment.
pub fn page_label(path: &str) -> String {
    if path == INDEX_PATH {
        "index".into()
    } else {
        path.trim_end_matches('/')
            .rsplit('/')
            .next()
            .unwrap_or(path)
            .to_string()
    }
}

impl Summary {
    pub fn audit_table(&self) -> Result<ComparisonTable, BenchError> {
        let rows: Vec<(String, Report)> = self
            .variants
            .iter()
            .flat_map(|v| {
                v.audits.iter().map(move |a| {
                    (format!("{} {}", v.name, page_label(&a.path)), Report::Audit(a.clone()))
                })
            })
            .collect();
        compare(&rows)
    }

    pub fn percentile_table(&self) -> Result<ComparisonTable, BenchError> {
        let rows: Vec<(String, Report)> = self
            .variants
            .iter()
            .map(|v| (v.name.clone(), Report::Bench(v.bench.clone())))
            .collect();
        compare(&rows)
    }

    /// One-line provenance used as a comment header in every report file.
    pub fn provenance(&self) -> String {
        format!(
            "{} {} seed={} config={} clock={} profile={} render_overhead_ms={} connections={}{}",
            self.tool,
            self.version,
            self.seed,
            self.config_digest,
            self.clock,
            self.profile.name,
            crate::serde_ms::to_ms(self.profile.render_overhead),
            self.config.bench.connections,
            if self.config.bench.connections == crate::bench::DEFAULT_CONNECTIONS {
                " (default)"
            } else {
                ""
            },
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn load(dir: &Path) -> Result<Self, io::Error> {
        let text = fs::read_to_string(dir.join(SUMMARY_FILE))?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Writes `audit.md`, `audit.csv`, `percentiles.csv` and `summary.json`.
    pub fn write_reports(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let tag = self.provenance();
        let audit = self.audit_table().map_err(io::Error::other)?;
        let percentiles = self.percentile_table().map_err(io::Error::other)?;

        let files = [
            (
                AUDIT_MD,
                format!(
                    "<!-- {tag} -->\n# Audit: first run vs. runs 2-{} (ms)\n\n{}\n# Sustained load (ms)\n\n{}",
                    self.config.audit.runs,
                    audit.to_markdown(),
                    percentiles.to_markdown()
                ),
            ),
            (AUDIT_CSV, format!("# {tag}\n{}", audit.to_csv())),
            (PERCENTILES_CSV, format!("# {tag}\n{}", percentiles.to_csv())),
            (SUMMARY_FILE, self.to_json()),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Runs the experiment on the runtime matching `cfg.deterministic`.
pub fn run(cfg: &ExperimentConfig) -> Result<Summary, ExperimentError> {
    cfg.validate()?;
    let mode = if cfg.deterministic {
        ClockMode::Virtual
    } else {
        ClockMode::Wall
    };
    runtime(mode)?.block_on(run_async(cfg, mode))
}

pub async fn run_async(cfg: &ExperimentConfig, mode: ClockMode) -> Result<Summary, ExperimentError> {
    cfg.validate()?;
    let clock = Clock::start(mode);
    let posts = generate_posts_with(cfg.seed(), cfg.post_count, &cfg.shape());
    let build = Arc::new(build_site(&posts, DeployId(0)));
    let profile = cfg.throttle_profile()?;
    let link = (mode == ClockMode::Virtual).then(|| cfg.sim_link());

    let mut variants = Vec::with_capacity(cfg.variants.len());
    for v in &cfg.variants {
        tracing::info!(variant = %v.name, strategy = %v.strategy, "running variant");
        let (target, server) = deploy_variant(cfg, v, &build, clock, link).await?;
        let result = measure_variant(cfg, &v.name, &target, &profile, &clock).await;
        if let Some(server) = server {
            server.shutdown().await?;
        }
        let (audits, bench) = result?;
        variants.push(VariantResult {
            name: v.name.clone(),
            strategy: v.strategy,
            audits,
            bench,
        });
    }

    Ok(Summary {
        tool: "edgelab".into(),
        version: crate::VERSION.into(),
        seed: cfg.seed,
        clock: mode,
        config_digest: cfg.digest().to_hex(),
        source_digest: build.source_digest().to_hex(),
        profile,
        link,
        config: cfg.without_out(),
        variants,
    })
}

async fn deploy_variant(
    cfg: &ExperimentConfig,
    v: &crate::config::VariantConfig,
    build: &Arc<SiteBuild>,
    clock: Clock,
    link: Option<SimLink>,
) -> Result<(Target, Option<ServerHandle>), ExperimentError> {
    let edge_err = |source| ExperimentError::Edge {
        variant: v.name.clone(),
        source,
    };
    let worker = EdgeWorker::new(cfg.strategy_config(v), clock).map_err(edge_err)?;
    worker.deploy(build.clone()).map_err(edge_err)?;
    match link {
        Some(link) => Ok((Target::in_process(worker, link), None)),
        None => {
            let server = spawn_variant(worker, SocketAddr::from(([127, 0, 0, 1], 0))).await?;
            let target = Target::http(&server.url()).map_err(|source| ExperimentError::Unreachable {
                variant: v.name.clone(),
                source,
            })?;
            Ok((target, Some(server)))
        }
    }
}

async fn measure_variant(
    cfg: &ExperimentConfig,
    name: &str,
    target: &Target,
    profile: &ThrottleProfile,
    clock: &Clock,
) -> Result<(Vec<AuditReport>, BenchReport), ExperimentError> {
    let unreachable = |source| ExperimentError::Unreachable {
        variant: name.to_string(),
        source,
    };
    let reset = cfg.reset_policy();
    let mut audits = Vec::with_capacity(cfg.audit.pages.len());
    for page in &cfg.audit.pages {
        let report = run_audit(target, page, profile, cfg.audit.runs, reset, clock)
            .await
            .map_err(unreachable)?;
        audits.push(report);
    }
    target
        .reset(reset.purge_cache, reset.cold_worker)
        .await
        .map_err(unreachable)?;
    let bench = run_load(target, &cfg.bench_config(), clock)
        .await
        .map_err(unreachable)?;
    Ok((audits, bench))
}
