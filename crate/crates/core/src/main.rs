use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use edgelab::bench::{compare, run_audit, run_load, Report, ResetPolicy, Target};
use edgelab::clock::{runtime, Clock, ClockMode};
use edgelab::config::ExperimentConfig;
use edgelab::content::{generate_posts_with, Post, Upstream};
use edgelab::edge::EdgeWorker;
use edgelab::experiment::{self, Summary, AUDIT_CSV, AUDIT_MD, PERCENTILES_CSV};
use edgelab::server;
use edgelab::ssg::{build_site, export, export_relpath, incremental_rebuild, load_export, DeployId, SiteBuild};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_PORT_TAKEN: u8 = 4;
const EXIT_UNREACHABLE: u8 = 5;

const MANIFEST_FILE: &str = "build-manifest.json";
const POSTS_FILE: &str = "posts.json";
const SITE_DIR: &str = "site";

/// Edge rendering lab: build, serve and benchmark SSG, SSR, ISR, SWR and DPR
/// variants of a synthetic blog.
#[derive(Parser, Debug)]
#[command(name = "edgelab", version, about)]
struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Content seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Virtual clock and in-process targets; outputs are reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate content, build the static site and export it.
    Build {
        /// Number of posts to generate.
        #[arg(long)]
        post_count: Option<usize>,
    },
    /// Serve every configured variant over HTTP until interrupted.
    Serve {
        /// Variant i listens on base_port + i.
        #[arg(long)]
        base_port: Option<u16>,
        /// Also serve the content API on this port.
        #[arg(long)]
        content_port: Option<u16>,
    },
    /// Sustained closed-loop load against a URL or a configured variant.
    Bench {
        #[command(flatten)]
        target: TargetArgs,
        /// Seconds of sustained load.
        #[arg(long)]
        duration: Option<u64>,
        /// Concurrent closed-loop connections.
        #[arg(long)]
        connections: Option<usize>,
        /// Page to request.
        #[arg(long)]
        path: Option<String>,
        /// Unrecorded requests sent before timing starts.
        #[arg(long)]
        warmup: Option<u32>,
    },
    /// Repeated single-page audits reported as run 1 vs. the rest.
    Audit {
        #[command(flatten)]
        target: TargetArgs,
        /// Audit runs per page (at least 2).
        #[arg(long)]
        runs: Option<u32>,
        /// Page to audit; repeatable. Defaults to the configured pages.
        #[arg(long)]
        path: Vec<String>,
        /// Keep the cache before run 1.
        #[arg(long)]
        no_purge: bool,
        /// Keep the worker warm before run 1.
        #[arg(long)]
        no_cold: bool,
    },
    /// Full protocol for every variant: audits, then sustained load.
    Experiment {
        /// Seconds of sustained load per variant.
        #[arg(long)]
        duration: Option<u64>,
        /// Audit runs per page.
        #[arg(long)]
        runs: Option<u32>,
        /// Concurrent connections for the load phase.
        #[arg(long)]
        connections: Option<usize>,
    },
    /// Regenerate report tables from a previous experiment's summary.
    Report,
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// Measure an HTTP server instead of an in-process variant.
    #[arg(long, conflicts_with = "variant")]
    url: Option<String>,
    /// Configured variant to measure in-process (default: the first).
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::new(EXIT_IO, e)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(io::stderr)
        .init();

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::new(EXIT_CONFIG, e))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn validated(cfg: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    cfg.validate().map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    Ok(cfg)
}

fn clock_mode(cfg: &ExperimentConfig) -> ClockMode {
    if cfg.deterministic {
        ClockMode::Virtual
    } else {
        ClockMode::Wall
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Build { post_count } => {
            if let Some(n) = post_count {
                cfg.post_count = n;
            }
            cmd_build(&validated(cfg)?)
        }
        Command::Serve {
            base_port,
            content_port,
        } => {
            if let Some(p) = base_port {
                cfg.base_port = p;
            }
            if content_port.is_some() {
                cfg.content_port = content_port;
            }
            cmd_serve(&validated(cfg)?)
        }
        Command::Bench {
            target,
            duration,
            connections,
            path,
            warmup,
        } => {
            if let Some(d) = duration {
                cfg.bench.duration_secs = d;
            }
            if let Some(c) = connections {
                cfg.bench.connections = c;
            }
            if let Some(p) = path {
                cfg.bench.path = p;
            }
            if let Some(w) = warmup {
                cfg.bench.warmup_requests = w;
            }
            cmd_bench(&validated(cfg)?, &target)
        }
        Command::Audit {
            target,
            runs,
            path,
            no_purge,
            no_cold,
        } => {
            if let Some(r) = runs {
                cfg.audit.runs = r;
            }
            if !path.is_empty() {
                cfg.audit.pages = path;
            }
            cfg.audit.purge_cache &= !no_purge;
            cfg.audit.cold_worker &= !no_cold;
            cmd_audit(&validated(cfg)?, &target)
        }
        Command::Experiment {
            duration,
            runs,
            connections,
        } => {
            if let Some(d) = duration {
                cfg.bench.duration_secs = d;
            }
            if let Some(r) = runs {
                cfg.audit.runs = r;
            }
            if let Some(c) = connections {
                cfg.bench.connections = c;
            }
            cmd_experiment(&validated(cfg)?)
        }
        Command::Report => cmd_report(&cfg),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BuildManifest {
    tool: String,
    version: String,
    seed: u64,
    config_digest: String,
    deploy_id: DeployId,
    source_digest: String,
    built_at_ms: u64,
    page_count: usize,
    incremental: bool,
    rebuilt_paths: Vec<String>,
    pages: std::collections::BTreeMap<String, String>,
}

fn load_previous(out: &Path) -> Option<SiteBuild> {
    let manifest: BuildManifest = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).ok()?).ok()?;
    let posts: Vec<Post> = serde_json::from_str(&fs::read_to_string(out.join(POSTS_FILE)).ok()?).ok()?;
    let pages = load_export(&out.join(SITE_DIR), &posts).ok()?;
    let prev = SiteBuild::from_parts(manifest.deploy_id, &posts, pages).ok()?;
    let intact = prev
        .page_hashes()
        .iter()
        .all(|(path, hash)| manifest.pages.get(*path) == Some(&hash.to_hex()));
    if intact {
        Some(prev)
    } else {
        tracing::warn!("previous export does not match its manifest; rebuilding from scratch");
        None
    }
}

fn cmd_build(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let out = &cfg.out;
    let site_dir = out.join(SITE_DIR);
    let posts = generate_posts_with(cfg.seed(), cfg.post_count, &cfg.shape());

    let (build, rebuilt, incremental) = match load_previous(out) {
        Some(prev) => {
            let (next, rebuilt) = incremental_rebuild(&prev, &posts);
            for stale in prev.pages().keys().filter(|p| next.page(p).is_none()) {
                let file = site_dir.join(export_relpath(stale));
                fs::remove_file(&file).map_err(io_failure)?;
                if let Some(parent) = file.parent().filter(|p| *p != site_dir) {
                    let _ = fs::remove_dir(parent);
                }
            }
            for path in &rebuilt {
                let page = next.page(path).expect("rebuilt page exists");
                let file = site_dir.join(export_relpath(path));
                fs::create_dir_all(file.parent().expect("page file has a parent")).map_err(io_failure)?;
                fs::write(&file, page.body()).map_err(io_failure)?;
            }
            (next, rebuilt, true)
        }
        None => {
            let build = build_site(&posts, DeployId(0));
            if site_dir.exists() {
                fs::remove_dir_all(&site_dir).map_err(io_failure)?;
            }
            fs::create_dir_all(&site_dir).map_err(io_failure)?;
            export(&build, &site_dir).map_err(io_failure)?;
            let all = build.pages().keys().cloned().collect();
            (build, all, false)
        }
    };

    let manifest = BuildManifest {
        tool: "edgelab".into(),
        version: edgelab::VERSION.into(),
        seed: cfg.seed,
        config_digest: cfg.digest().to_hex(),
        deploy_id: build.deploy_id(),
        source_digest: build.source_digest().to_hex(),
        built_at_ms: build.built_at_ms(),
        page_count: build.pages().len(),
        incremental,
        rebuilt_paths: rebuilt.iter().cloned().collect(),
        pages: build
            .page_hashes()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_hex()))
            .collect(),
    };
    write_json(&out.join(POSTS_FILE), &posts)?;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;

    println!(
        "built {} ({} pages, {} rebuilt{}) into {}",
        build.deploy_id(),
        build.pages().len(),
        rebuilt.len(),
        if incremental { ", incremental" } else { "" },
        site_dir.display()
    );
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_failure)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(io_failure)?;
    text.push('\n');
    fs::write(path, text).map_err(io_failure)
}

fn bind_failure(e: io::Error, what: &str) -> Failure {
    let code = if e.kind() == io::ErrorKind::AddrInUse {
        EXIT_PORT_TAKEN
    } else {
        EXIT_IO
    };
    Failure::new(code, anyhow!(e).context(format!("cannot bind {what}")))
}

fn cmd_serve(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let rt = runtime(ClockMode::Wall).map_err(io_failure)?;
    rt.block_on(async {
        let clock = Clock::start(ClockMode::Wall);
        let posts = generate_posts_with(cfg.seed(), cfg.post_count, &cfg.shape());
        let build = Arc::new(build_site(&posts, DeployId(0)));

        let mut handles = Vec::new();
        for (i, v) in cfg.variants.iter().enumerate() {
            let worker = EdgeWorker::new(cfg.strategy_config(v), clock).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
            worker.deploy(build.clone()).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
            let addr = SocketAddr::from(([127, 0, 0, 1], cfg.port_for(i)));
            let handle = server::spawn_variant(worker, addr)
                .await
                .map_err(|e| bind_failure(e, &format!("variant `{}` on {addr}", v.name)))?;
            println!("{:<12} {:<6} {}", v.name, v.strategy, handle.url());
            handles.push(handle);
        }
        if let Some(port) = cfg.content_port {
            let addr = SocketAddr::from(([127, 0, 0, 1], port));
            let upstream = Upstream::new(build.posts().clone(), cfg.upstream().delay);
            let handle = server::spawn_content(upstream, clock, addr)
                .await
                .map_err(|e| bind_failure(e, &format!("content API on {addr}")))?;
            println!("{:<12} {:<6} {}", "content", "API", handle.url());
            handles.push(handle);
        }
        println!("serving {} variant(s); Ctrl-C to stop", cfg.variants.len());

        tokio::signal::ctrl_c().await.map_err(io_failure)?;
        for h in handles {
            h.shutdown().await.map_err(io_failure)?;
        }
        Ok(())
    })
}

/// Builds the measurement target and runs `f` against it on the right runtime.
fn with_target<T>(
    cfg: &ExperimentConfig,
    args: &TargetArgs,
    f: impl AsyncFnOnce(Target, Clock) -> Result<T, Failure>,
) -> Result<T, Failure> {
    let mode = if args.url.is_some() {
        ClockMode::Wall
    } else {
        clock_mode(cfg)
    };
    let rt = runtime(mode).map_err(io_failure)?;
    rt.block_on(async {
        let clock = Clock::start(mode);
        let target = match &args.url {
            Some(url) => Target::http(url).map_err(|e| Failure::new(EXIT_CONFIG, e))?,
            None => {
                let v = match &args.variant {
                    Some(name) => cfg
                        .variant(name)
                        .ok_or_else(|| Failure::new(EXIT_CONFIG, anyhow!("no variant named `{name}`")))?,
                    None => &cfg.variants[0],
                };
                let posts = generate_posts_with(cfg.seed(), cfg.post_count, &cfg.shape());
                let build = Arc::new(build_site(&posts, DeployId(0)));
                let worker = EdgeWorker::new(cfg.strategy_config(v), clock).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
                worker.deploy(build).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
                let link = if mode == ClockMode::Virtual {
                    cfg.sim_link()
                } else {
                    edgelab::bench::SimLink::zero()
                };
                Target::in_process(worker, link)
            }
        };
        f(target, clock).await
    })
}

fn target_label(args: &TargetArgs, cfg: &ExperimentConfig) -> String {
    args.url
        .clone()
        .or_else(|| args.variant.clone())
        .unwrap_or_else(|| cfg.variants[0].name.clone())
}

fn cmd_bench(cfg: &ExperimentConfig, args: &TargetArgs) -> Result<(), Failure> {
    let bench_cfg = cfg.bench_config();
    let report = with_target(cfg, args, async |target, clock| {
        run_load(&target, &bench_cfg, &clock)
            .await
            .map_err(|e| Failure::new(EXIT_UNREACHABLE, e))
    })?;
    let table = compare(&[(target_label(args, cfg), Report::Bench(report))]).map_err(io_failure)?;
    fs::create_dir_all(&cfg.out).map_err(io_failure)?;
    let file = cfg.out.join(PERCENTILES_CSV);
    fs::write(&file, table.to_csv()).map_err(io_failure)?;
    print!("{}", table.to_markdown());
    println!("\nwrote {}", file.display());
    Ok(())
}

fn cmd_audit(cfg: &ExperimentConfig, args: &TargetArgs) -> Result<(), Failure> {
    let profile = cfg.throttle_profile().map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let reset: ResetPolicy = cfg.reset_policy();
    let label = target_label(args, cfg);
    let reports = with_target(cfg, args, async |target, clock| {
        let mut out = Vec::new();
        for page in &cfg.audit.pages {
            let r = run_audit(&target, page, &profile, cfg.audit.runs, reset, &clock)
                .await
                .map_err(|e| Failure::new(EXIT_UNREACHABLE, e))?;
            out.push((format!("{label} {}", experiment::page_label(page)), Report::Audit(r)));
        }
        Ok(out)
    })?;
    let table = compare(&reports).map_err(io_failure)?;
    fs::create_dir_all(&cfg.out).map_err(io_failure)?;
    fs::write(cfg.out.join(AUDIT_CSV), table.to_csv()).map_err(io_failure)?;
    fs::write(cfg.out.join(AUDIT_MD), table.to_markdown()).map_err(io_failure)?;
    print!("{}", table.to_markdown());
    println!("\nprofile: {profile}");
    Ok(())
}

fn cmd_experiment(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let started = std::time::Instant::now();
    let summary = experiment::run(cfg).map_err(|e| match e {
        experiment::ExperimentError::Config(_) | experiment::ExperimentError::Edge { .. } => {
            Failure::new(EXIT_CONFIG, e)
        }
        experiment::ExperimentError::Unreachable { .. } => Failure::new(EXIT_UNREACHABLE, e),
        experiment::ExperimentError::Io(_) => Failure::new(EXIT_IO, e),
    })?;
    let files = summary.write_reports(&cfg.out).map_err(io_failure)?;
    print_tables(&summary)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    tracing::info!(elapsed = ?started.elapsed(), "experiment finished");
    Ok(())
}

fn print_tables(summary: &Summary) -> Result<(), Failure> {
    println!("# {}\n", summary.provenance());
    println!("{}", summary.audit_table().map_err(io_failure)?.to_markdown());
    print!("{}", summary.percentile_table().map_err(io_failure)?.to_markdown());
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let summary = Summary::load(&cfg.out)
        .with_context(|| format!("cannot read {}", cfg.out.join(experiment::SUMMARY_FILE).display()))
        .map_err(io_failure)?;
    summary.write_reports(&cfg.out).map_err(io_failure)?;
    print_tables(&summary)
}
