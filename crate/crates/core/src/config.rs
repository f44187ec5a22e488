//! Experiment configuration: a single TOML file. Command-line flags override
//! file values. Durations are integers with the unit in the key name so the
//! file round-trips exactly.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchConfig, ResetPolicy, SimLink};
use crate::content::{PostShape, Seed, UpstreamConfig};
use crate::digest::Digest;
use crate::edge::{Strategy, StrategyConfig};
use crate::netmodel::ThrottleProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantConfig {
    pub name: String,
    pub strategy: Strategy,
    /// ISR/SWR staleness horizon; absent means infinite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ttl_ms: Option<u64>,
    pub cold_start_ms: u64,
    /// Overrides the experiment-wide upstream delay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upstream_delay_ms: Option<u64>,
    pub base_handling_us: u64,
    pub kv_read_us: u64,
    /// Serve-mode port; absent means `base_port + index`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            strategy: Strategy::Static,
            ttl_ms: None,
            cold_start_ms: 0,
            upstream_delay_ms: None,
            base_handling_us: 0,
            kv_read_us: 0,
            port: None,
        }
    }
}

impl VariantConfig {
    pub fn new(name: &str, strategy: Strategy) -> Self {
        Self {
            name: name.into(),
            strategy,
            ttl_ms: (strategy == Strategy::Swr).then_some(60_000),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub duration_secs: u64,
    pub connections: usize,
    pub path: String,
    pub warmup_requests: u32,
    pub discard_first_second: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        let d = BenchConfig::default();
        Self {
            duration_secs: d.duration.as_secs(),
            connections: d.connections,
            path: d.target_path,
            warmup_requests: d.warmup_requests,
            discard_first_second: d.discard_first_second,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub runs: u32,
    pub pages: Vec<String>,
    pub purge_cache: bool,
    pub cold_worker: bool,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            runs: crate::bench::DEFAULT_RUNS,
            pages: vec!["/".into(), "/posts/post-0".into()],
            purge_cache: true,
            cold_worker: true,
        }
    }
}

/// The simulated client hop used by deterministic runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSettings {
    pub rtt_us: u64,
    pub jitter_us: u64,
}

impl Default for LinkSettings {
    fn default() -> Self {
        let l = SimLink::default();
        Self {
            rtt_us: l.rtt.as_micros() as u64,
            jitter_us: l.jitter.as_micros() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub post_count: usize,
    pub min_words: u32,
    pub max_words: u32,
    pub upstream_delay_ms: u64,
    /// Throttle preset name: `mobile-throttled` or `none`.
    pub throttle: String,
    pub render_overhead_ms: u64,
    pub deterministic: bool,
    pub out: PathBuf,
    pub base_port: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content_port: Option<u16>,
    pub link: LinkSettings,
    pub bench: BenchSettings,
    pub audit: AuditSettings,
    pub variants: Vec<VariantConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let up = UpstreamConfig::default();
        Self {
            seed: Seed::default().0,
            post_count: up.post_count,
            min_words: up.shape.min_words,
            max_words: up.shape.max_words,
            upstream_delay_ms: up.delay.as_millis() as u64,
            throttle: "mobile-throttled".into(),
            render_overhead_ms: 0,
            deterministic: false,
            out: PathBuf::from("out"),
            base_port: 8600,
            content_port: None,
            link: LinkSettings::default(),
            bench: BenchSettings::default(),
            audit: AuditSettings::default(),
            variants: vec![
                VariantConfig::new("SSR", Strategy::Ssr),
                VariantConfig::new("ISR", Strategy::Isr),
                VariantConfig::new("SSG", Strategy::Static),
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Digest of the canonical emitted form. The output directory is not
    /// part of an experiment's identity and is left out.
    pub fn digest(&self) -> Digest {
        Digest::of(self.without_out().emit().as_bytes())
    }

    /// A copy with `out` reset to its default.
    pub fn without_out(&self) -> Self {
        Self {
            out: Self::default().out,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.shape()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.throttle_profile()?;
        if i64::try_from(self.seed).is_err() {
            return invalid(format!("seed must be at most {}", i64::MAX));
        }
        if let Err(e) = toml::to_string(self) {
            return invalid(format!("value not representable in TOML: {e}"));
        }
        if self.variants.is_empty() {
            return invalid("at least one variant is required".into());
        }
        let mut names = HashSet::new();
        for v in &self.variants {
            if v.name.trim().is_empty() {
                return invalid("variant names must be non-empty".into());
            }
            if !names.insert(v.name.as_str()) {
                return invalid(format!("duplicate variant name `{}`", v.name));
            }
            self.strategy_config(v)
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("variant `{}`: {e}", v.name)))?;
        }
        self.bench_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.audit.runs < 2 {
            return invalid(format!("audit.runs must be >= 2, got {}", self.audit.runs));
        }
        if let Some(p) = self.audit.pages.iter().find(|p| !p.starts_with('/')) {
            return invalid(format!("audit page `{p}` must start with `/`"));
        }
        Ok(())
    }

    pub fn seed(&self) -> Seed {
        Seed(self.seed)
    }

    pub fn shape(&self) -> PostShape {
        PostShape {
            min_words: self.min_words,
            max_words: self.max_words,
        }
    }

    pub fn upstream(&self) -> UpstreamConfig {
        UpstreamConfig {
            delay: Duration::from_millis(self.upstream_delay_ms),
            post_count: self.post_count,
            shape: self.shape(),
        }
    }

    pub fn strategy_config(&self, v: &VariantConfig) -> StrategyConfig {
        StrategyConfig {
            strategy: v.strategy,
            upstream_delay: Duration::from_millis(v.upstream_delay_ms.unwrap_or(self.upstream_delay_ms)),
            ttl: v.ttl_ms.map(Duration::from_millis),
            cold_start_penalty: Duration::from_millis(v.cold_start_ms),
            base_handling: Duration::from_micros(v.base_handling_us),
            kv_read_delay: Duration::from_micros(v.kv_read_us),
        }
    }

    pub fn throttle_profile(&self) -> Result<ThrottleProfile, ConfigError> {
        ThrottleProfile::preset(&self.throttle)
            .map(|p| p.with_render_overhead(Duration::from_millis(self.render_overhead_ms)))
            .ok_or_else(|| ConfigError::Invalid(format!("unknown throttle preset `{}`", self.throttle)))
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            duration: Duration::from_secs(self.bench.duration_secs),
            connections: self.bench.connections,
            target_path: self.bench.path.clone(),
            warmup_requests: self.bench.warmup_requests,
            discard_first_second: self.bench.discard_first_second,
        }
    }

    pub fn reset_policy(&self) -> ResetPolicy {
        ResetPolicy {
            purge_cache: self.audit.purge_cache,
            cold_worker: self.audit.cold_worker,
        }
    }

    pub fn sim_link(&self) -> SimLink {
        SimLink {
            rtt: Duration::from_micros(self.link.rtt_us),
            jitter: Duration::from_micros(self.link.jitter_us),
            seed: self.seed,
        }
    }

    pub fn variant(&self, name: &str) -> Option<&VariantConfig> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// Serve-mode port of the variant at `index`.
    pub fn port_for(&self, index: usize) -> u16 {
        self.variants[index]
            .port
            .unwrap_or_else(|| if self.base_port == 0 { 0 } else { self.base_port + index as u16 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::Strategy;
    use proptest::prelude::*;
    use proptest::strategy::Strategy as PropStrategy;

    #[test]
    fn default_is_valid_three_variant_preset() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let names: Vec<&str> = cfg.variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["SSR", "ISR", "SSG"]);
        assert_eq!(cfg.bench_config().duration, Duration::from_secs(30));
    }

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::parse("seed = 7\n[bench]\nduration_secs = 3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.bench.duration_secs, 3);
        assert_eq!(cfg.bench.connections, 10);
        assert_eq!(cfg.variants.len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse("sede = 7\n").is_err());
    }

    #[test]
    fn validation_catches_errors() {
        let mut cfg = ExperimentConfig::default();
        cfg.variants.push(VariantConfig::new("SSR", Strategy::Dpr));
        assert!(cfg.validate().is_err());

        let cfg = ExperimentConfig {
            variants: vec![VariantConfig {
                ttl_ms: None,
                ..VariantConfig::new("swr", Strategy::Swr)
            }],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = ExperimentConfig {
            throttle: "dialup".into(),
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.audit.runs = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.bench.connections = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn digest_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn example_file_parses() {
        let text = include_str!("../../../edgelab.example.toml");
        let cfg = ExperimentConfig::parse(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.variants.len(), 4);
    }

    #[test]
    fn ports_follow_base() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.port_for(2), 8602);
        cfg.variants[1].port = Some(9000);
        assert_eq!(cfg.port_for(1), 9000);
        cfg.base_port = 0;
        assert_eq!(cfg.port_for(0), 0);
    }

    fn strategy() -> impl PropStrategy<Value = Strategy> {
        prop::sample::select(Strategy::ALL.to_vec())
    }

    fn variant() -> impl PropStrategy<Value = VariantConfig> {
        (
            "[A-Za-z][A-Za-z0-9 _-]{0,12}",
            strategy(),
            prop::option::of(1u64..1_000_000),
            0u64..10_000,
            prop::option::of(0u64..10_000),
            0u64..10_000,
            0u64..10_000,
            prop::option::of(1u16..u16::MAX),
        )
            .prop_map(|(name, strategy, ttl_ms, cold_start_ms, upstream_delay_ms, base_handling_us, kv_read_us, port)| {
                VariantConfig {
                    name,
                    strategy,
                    ttl_ms,
                    cold_start_ms,
                    upstream_delay_ms,
                    base_handling_us,
                    kv_read_us,
                    port,
                }
            })
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip(
            seed in 0..=i64::MAX as u64,
            post_count in 0usize..10_000,
            delay in 0u64..10_000,
            deterministic in any::<bool>(),
            duration in 1u64..1000,
            connections in 1usize..512,
            runs in 2u32..20,
            content_port in prop::option::of(any::<u16>()),
            variants in prop::collection::vec(variant(), 1..5),
        ) {
            let cfg = ExperimentConfig {
                seed,
                post_count,
                upstream_delay_ms: delay,
                deterministic,
                content_port,
                bench: BenchSettings { duration_secs: duration, connections, ..BenchSettings::default() },
                audit: AuditSettings { runs, ..AuditSettings::default() },
                variants,
                ..ExperimentConfig::default()
            };
            let back = ExperimentConfig::parse(&cfg.emit()).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.digest(), cfg.digest());
        }
    }
}
