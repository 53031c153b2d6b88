use std::collections::BTreeMap;

use thiserror::Error;

use super::{Classification, FlowState};
use crate::wire::{MAX_RECORD_PAYLOAD, RECORD_HEADER_LEN};

const MICROS: u128 = 1_000_000;

/// Largest record the shaper ever has to admit in one piece.
pub const MAX_WIRE_RECORD: u64 = (RECORD_HEADER_LEN + MAX_RECORD_PAYLOAD) as u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShaperError {
    #[error("rate for {0} must be positive")]
    ZeroRate(String),
    #[error("bucket depth {0} is smaller than one record ({MAX_WIRE_RECORD} bytes)")]
    ShallowBucket(u64),
    #[error("bad rate {0:?}")]
    BadRate(String),
    #[error("rate map line {line}: {msg}")]
    RateMap { line: usize, msg: String },
}

/// Per-class token-bucket limits. Rates are bits per second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShaperConfig {
    pub class_rates: BTreeMap<String, u64>,
    pub default_rate: u64,
    pub bucket_depth: u64,
}

impl ShaperConfig {
    /// A shaper with no classes; depth is two full records.
    pub fn new(default_rate: u64) -> Self {
        ShaperConfig {
            class_rates: BTreeMap::new(),
            default_rate,
            bucket_depth: 2 * MAX_WIRE_RECORD,
        }
    }

    pub fn with_class(mut self, name: impl Into<String>, rate: u64) -> Self {
        self.class_rates.insert(name.into(), rate);
        self
    }

    pub fn validate(&self) -> Result<(), ShaperError> {
        if self.default_rate == 0 {
            return Err(ShaperError::ZeroRate("default class".into()));
        }
        if let Some((name, _)) = self.class_rates.iter().find(|(_, r)| **r == 0) {
            return Err(ShaperError::ZeroRate(name.clone()));
        }
        if self.bucket_depth < MAX_WIRE_RECORD {
            return Err(ShaperError::ShallowBucket(self.bucket_depth));
        }
        Ok(())
    }

    pub fn rate_for(&self, classification: &Classification) -> u64 {
        match classification {
            Classification::Identified(name) => self
                .class_rates
                .get(name.as_str())
                .copied()
                .unwrap_or(self.default_rate),
            _ => self.default_rate,
        }
    }
}

/// Token bucket holding whole records. Tokens are counted in micro-bits so
/// refills at any integer rate are exact.
#[derive(Debug, Clone, Default)]
pub struct TokenBucket {
    tokens: u128,
    last_us: u64,
    busy_until: u64,
    started: bool,
}

impl TokenBucket {
    pub fn new() -> Self {
        Self::default()
    }

    /// Admits a `len`-byte record that arrived at `now_us` and returns its
    /// release time. Records leave in arrival order.
    pub fn admit(&mut self, rate_bps: u64, depth: u64, len: u64, now_us: u64) -> u64 {
        let depth = depth.max(len) as u128 * 8 * MICROS;
        let rate = rate_bps.max(1) as u128;
        if !self.started {
            self.started = true;
            self.tokens = depth;
            self.last_us = now_us;
        }
        let start = now_us.max(self.busy_until).max(self.last_us);
        self.tokens = (self.tokens + rate * (start - self.last_us) as u128).min(depth);
        self.last_us = start;

        let cost = len as u128 * 8 * MICROS;
        let release = if self.tokens >= cost {
            self.tokens -= cost;
            start
        } else {
            let wait = (cost - self.tokens).div_ceil(rate);
            self.tokens = (self.tokens + rate * wait).min(depth) - cost;
            self.last_us = start + wait as u64;
            self.last_us
        };
        self.busy_until = release;
        release
    }
}

/// Release time for a record of `packet_len` bytes on `flow`. Pending and
/// Unknown flows, and names without a class, use the default rate.
pub fn shape(
    cfg: &ShaperConfig,
    flow: &FlowState,
    bucket: &mut TokenBucket,
    packet_len: u64,
    now_us: u64,
) -> u64 {
    let rate = cfg.rate_for(flow.classification());
    bucket.admit(rate, cfg.bucket_depth, packet_len, now_us)
}

/// Parses `2.5M`, `1Mbps`, `800k`, `1e6` or a plain number of bits per second.
pub fn parse_rate(text: &str) -> Result<u64, ShaperError> {
    let bad = || ShaperError::BadRate(text.to_owned());
    let t = text.trim();
    let t = t
        .strip_suffix("bps")
        .or_else(|| t.strip_suffix("bit/s"))
        .unwrap_or(t);
    let (num, scale) = match t.chars().last() {
        Some('k' | 'K') => (&t[..t.len() - 1], 1e3),
        Some('M') => (&t[..t.len() - 1], 1e6),
        Some('G') => (&t[..t.len() - 1], 1e9),
        _ => (t, 1.0),
    };
    let value: f64 = num.trim().parse().map_err(|_| bad())?;
    let bps = value * scale;
    if !bps.is_finite() || bps < 1.0 || bps > u64::MAX as f64 {
        return Err(bad());
    }
    Ok(bps.round() as u64)
}

/// Reads `host rate` lines; `#` starts a comment.
pub fn parse_rate_map(text: &str) -> Result<BTreeMap<String, u64>, ShaperError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ShaperError::RateMap { line: i + 1, msg };
        let mut fields = line.split_whitespace();
        let (Some(host), Some(rate), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err("expected `host rate`".into()));
        };
        let host = crate::wire::SniValue::new(host).map_err(|e| err(e.to_string()))?;
        let rate = parse_rate(rate).map_err(|e| err(e.to_string()))?;
        map.insert(host.as_str().to_owned(), rate);
    }
    Ok(map)
}
