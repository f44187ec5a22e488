//! Edge rendering lab.
//!
//! Generates a deterministic blog, builds it statically, and serves it from
//! a simulated edge worker under five rendering strategies (STATIC, SSR, ISR,
//! SWR, DPR). The [`bench`] module measures the variants with sustained
//! closed-loop load and with repeated first-vs-warm audits.

pub mod bench;
pub mod clock;
pub mod config;
pub mod content;
pub mod digest;
pub mod edge;
pub mod experiment;
pub mod netmodel;
pub mod serde_ms;
pub mod server;
pub mod ssg;

pub use clock::{Clock, ClockMode};
pub use digest::Digest;

/// Tool version embedded in every generated artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
