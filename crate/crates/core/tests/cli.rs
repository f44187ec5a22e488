use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn edgelab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn files_under(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            if e.file_type().unwrap().is_dir() {
                files_under(&e.path())
            } else {
                1
            }
        })
        .sum()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("build-manifest.json")).unwrap()).unwrap()
}

#[test]
fn build_exports_and_rebuilds_incrementally() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    ok(&edgelab(&["build"], out));
    assert_eq!(files_under(&out.join("site")), 101);
    assert!(out.join("site/index.html").is_file());
    assert!(out.join("site/posts/post-99/index.html").is_file());
    let first = manifest(out);
    assert_eq!(first["rebuilt_paths"].as_array().unwrap().len(), 101);
    assert_eq!(first["deploy_id"], 1);

    ok(&edgelab(&["build"], out));
    let noop = manifest(out);
    assert_eq!(noop["rebuilt_paths"].as_array().unwrap().len(), 0);
    assert_eq!(noop["incremental"], true);
    assert_eq!(noop["pages"], first["pages"]);

    ok(&edgelab(&["build", "--post-count", "103"], out));
    let grown = manifest(out);
    let rebuilt: Vec<_> = grown["rebuilt_paths"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(rebuilt, ["/", "/posts/post-100", "/posts/post-101", "/posts/post-102"]);
    assert_eq!(files_under(&out.join("site")), 104);

    ok(&edgelab(&["build", "--post-count", "10"], out));
    assert_eq!(files_under(&out.join("site")), 11);
    assert!(!out.join("site/posts/post-10").exists());
}

#[test]
fn build_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    ok(&edgelab(&["build", "--seed", "7"], a.path()));
    ok(&edgelab(&["build", "--seed", "7"], b.path()));
    ok(&edgelab(&["build", "--seed", "8"], c.path()));
    assert_eq!(manifest(a.path())["pages"], manifest(b.path())["pages"]);
    assert_ne!(manifest(a.path())["pages"], manifest(c.path())["pages"]);
}

#[test]
fn deterministic_experiment_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["experiment", "--deterministic", "--duration", "2", "--runs", "3"];
    ok(&edgelab(&args, a.path()));
    ok(&edgelab(&args, b.path()));
    for f in ["summary.json", "audit.md", "audit.csv", "percentiles.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn report_regenerates_tables_from_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&edgelab(&["experiment", "--deterministic", "--duration", "1", "--runs", "2"], out));
    let csv = fs::read(out.join("percentiles.csv")).unwrap();
    fs::remove_file(out.join("percentiles.csv")).unwrap();
    fs::remove_file(out.join("audit.md")).unwrap();
    let printed = ok(&edgelab(&["report"], out));
    assert!(printed.contains("| Percentile"));
    assert_eq!(fs::read(out.join("percentiles.csv")).unwrap(), csv);
    assert!(out.join("audit.md").is_file());
}

#[test]
fn wall_clock_experiment_finishes_promptly() {
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let stdout = ok(&edgelab(&["experiment", "--duration", "3", "--runs", "5"], dir.path()));
    assert!(started.elapsed() < Duration::from_secs(120));
    assert!(stdout.contains("clock=wall"));
    let csv = fs::read_to_string(dir.path().join("percentiles.csv")).unwrap();
    assert!(csv.starts_with("# "));
    assert!(csv.lines().nth(1).unwrap().starts_with("percentile,SSR,ISR,SSG"));
    let audit = fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    assert_eq!(audit.lines().filter(|l| !l.starts_with('#')).count(), 1 + 6);
}

#[test]
fn bench_and_audit_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let stdout = ok(&edgelab(
        &["bench", "--deterministic", "--variant", "ISR", "--duration", "2", "--connections", "2"],
        out,
    ));
    assert!(stdout.contains("| ISR"));
    assert!(out.join("percentiles.csv").is_file());

    ok(&edgelab(&["audit", "--deterministic", "--variant", "SSR", "--runs", "3", "--path", "/"], out));
    let md = fs::read_to_string(out.join("audit.md")).unwrap();
    assert!(md.contains("SSR index"));
    assert!(md.contains("| 100.0 |"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    let missing = edgelab(&["--config", "/definitely/not/here.toml", "build"], out);
    assert_eq!(missing.status.code(), Some(2));

    let bad = out.join("bad.toml");
    fs::write(&bad, "seed = 1\nbogus_key = true\n").unwrap();
    let parse = edgelab(&["--config", bad.to_str().unwrap(), "build"], out);
    assert_eq!(parse.status.code(), Some(2));

    let unknown = edgelab(&["bench", "--variant", "NOPE"], out);
    assert_eq!(unknown.status.code(), Some(2));

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let unreachable = edgelab(&["audit", "--url", &format!("http://{addr}"), "--runs", "2", "--path", "/"], out);
    assert_eq!(unreachable.status.code(), Some(5));

    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let taken = edgelab(&["serve", "--base-port", &port], out);
    assert_eq!(taken.status.code(), Some(4));
}
