//! Serde helpers writing durations as (fractional) milliseconds.

use std::time::Duration;

use serde::{Deserialize, Deserializer, Serializer};

pub fn to_ms(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1e6
}

pub fn from_ms(ms: f64) -> Duration {
    Duration::from_nanos((ms * 1e6).round().max(0.0) as u64)
}

pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(to_ms(*d))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
    let ms = f64::deserialize(d)?;
    if !ms.is_finite() || ms < 0.0 {
        return Err(serde::de::Error::custom("duration must be a finite, non-negative ms value"));
    }
    Ok(from_ms(ms))
}
