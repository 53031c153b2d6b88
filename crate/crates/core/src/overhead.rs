//! Cost of the second handshake relative to a whole transfer.

use serde::Serialize;

use crate::handshake::{ClientConfig, ClientMode, HandshakeError, ServerConfig};
use crate::middlebox::{simulate_transfer, LinkSim, ShaperConfig, TransferReport, TunnelStats};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub payload_bytes: u64,
    pub repeats: u32,
    pub capacity_bps: u64,
    pub propagation_ms: u64,
    /// Median completion time in seconds.
    pub legacy_seconds: f64,
    pub masked_seconds: f64,
    pub extra_handshake_fraction: f64,
    pub tunnel_flights: u32,
    pub tunnel_bytes: u64,
}

impl BenchReport {
    pub fn new(payload_bytes: u64, repeats: u32, legacy: f64, masked: f64, tunnel: TunnelStats) -> Self {
        BenchReport {
            payload_bytes,
            repeats,
            capacity_bps: 0,
            propagation_ms: 0,
            legacy_seconds: legacy,
            masked_seconds: masked,
            extra_handshake_fraction: if masked > 0.0 { (masked - legacy) / masked } else { 0.0 },
            tunnel_flights: tunnel.flights,
            tunnel_bytes: tunnel.bytes,
        }
    }

    /// Second-handshake bytes as a share of the payload.
    pub fn tunnel_byte_fraction(&self) -> f64 {
        if self.payload_bytes == 0 {
            return f64::INFINITY;
        }
        self.tunnel_bytes as f64 / self.payload_bytes as f64
    }

    /// Upper estimate of the extra time from the second handshake alone: its
    /// flights each cost one propagation delay plus their bytes' serialization.
    pub fn predicted_extra_seconds(&self) -> f64 {
        let prop = self.tunnel_flights as f64 * self.propagation_ms as f64 / 1e3;
        let ser = if self.capacity_bps == 0 { 0.0 } else { self.tunnel_bytes as f64 * 8.0 / self.capacity_bps as f64 };
        prop + ser
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => (values[n / 2 - 1] + values[n / 2]) / 2.0,
    }
}

fn completion_us(report: &TransferReport) -> u64 {
    let handshakes = report.handshake_complete_us.last().copied().unwrap_or(0);
    report.transfer_done_us.unwrap_or(0).max(handshakes)
}

/// Median-of-`repeats` legacy and masked transfers on the simulated link with
/// no shaping. Seeds advance per repeat from the configs' own.
pub fn run_overhead_bench(
    client: &ClientConfig,
    server: &ServerConfig,
    link: &LinkSim,
    payload_bytes: u64,
    repeats: u32,
) -> Result<BenchReport, HandshakeError> {
    let repeats = repeats.max(1);
    let open = ShaperConfig::new(u64::MAX / 16);
    let mut times = [Vec::new(), Vec::new()];
    let mut tunnel = TunnelStats::default();
    for i in 0..repeats {
        for (k, mode) in [ClientMode::Legacy, ClientMode::Masked].into_iter().enumerate() {
            let mut c = client.clone();
            c.mode = mode;
            c.seed = Some(c.seed.unwrap_or(0).wrapping_add(i as u64));
            let mut s = server.clone();
            s.seed = Some(s.seed.unwrap_or(0).wrapping_add(i as u64));
            let report = simulate_transfer(c, s, &open, link, payload_bytes);
            if let Some(e) = report.error {
                return Err(e);
            }
            if mode == ClientMode::Masked {
                tunnel = report.tunnel;
            }
            times[k].push(completion_us(&report) as f64 / 1e6);
        }
    }
    let [mut legacy, mut masked] = times;
    let mut report = BenchReport::new(payload_bytes, repeats, median(&mut legacy), median(&mut masked), tunnel);
    report.capacity_bps = link.capacity_bps;
    report.propagation_ms = link.propagation_ms;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::cert::{generate_self_signed, CertEntry, CertStore};
    use crate::wire::SniValue;

    fn configs() -> (ClientConfig, ServerConfig) {
        let at = Utc.with_ymd_and_hms(2026, 3, 1, 0, 0, 0).unwrap();
        let entry = |s, seed| {
            let (doc, keypair) = generate_self_signed(s, 30, Some(seed), at).unwrap();
            CertEntry { doc, keypair }
        };
        let mut store = CertStore::new(entry("front.example", 1));
        store.insert(entry("video.example", 2));
        let mut c = ClientConfig::new(SniValue::new("video.example").unwrap(), ClientMode::Masked);
        c.now = Some(at + chrono::Duration::days(1));
        (c, ServerConfig::new(Arc::new(store)))
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn fraction_definition() {
        let r = BenchReport::new(10, 1, 9.0, 10.0, TunnelStats::default());
        assert!((r.extra_handshake_fraction - 0.1).abs() < 1e-12);
        assert_eq!(BenchReport::new(0, 1, 0.0, 0.0, TunnelStats::default()).extra_handshake_fraction, 0.0);
    }

    #[test]
    fn empty_payload_is_handshake_dominated() {
        let (c, s) = configs();
        let r = run_overhead_bench(&c, &s, &LinkSim::new(10_000_000, 10), 0, 1).unwrap();
        assert!(r.extra_handshake_fraction > 0.4 && r.extra_handshake_fraction < 1.0, "{r:?}");
        assert_eq!(r.tunnel_flights, 4);
    }

    #[test]
    fn schema_is_stable_across_repeats() {
        let (c, s) = configs();
        let link = LinkSim::new(10_000_000, 10);
        let one = run_overhead_bench(&c, &s, &link, 100_000, 1).unwrap();
        let three = run_overhead_bench(&c, &s, &link, 100_000, 3).unwrap();
        let keys = |r: &BenchReport| {
            serde_json::to_value(r).unwrap().as_object().unwrap().keys().cloned().collect::<Vec<_>>()
        };
        assert_eq!(keys(&one), keys(&three));
        assert_eq!(three.repeats, 3);
        // Extra time is about the predicted flights plus bytes.
        let extra = one.masked_seconds - one.legacy_seconds;
        assert!(extra > 0.0 && extra <= one.predicted_extra_seconds() * 1.5, "{one:?}");
    }
}
