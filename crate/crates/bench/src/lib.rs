//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use veil_core::cert::generate_self_signed;
use veil_core::{CertEntry, CertStore, ClientConfig, ClientMode, ServerConfig, SniValue};

pub fn issued_at() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

/// Seeded client and server for a front.example / video.example store.
pub fn demo_configs(mode: ClientMode) -> (ClientConfig, ServerConfig) {
    let entry = |subject: &str, seed| {
        let (doc, keypair) = generate_self_signed(subject, 365, Some(seed), issued_at()).unwrap();
        CertEntry { doc, keypair }
    };
    let mut store = CertStore::new(entry("front.example", 1));
    store.insert(entry("video.example", 2));
    let mut client = ClientConfig::new(SniValue::new("video.example").unwrap(), mode);
    client.seed = Some(7);
    client.now = Some(issued_at() + Duration::days(1));
    let mut server = ServerConfig::new(Arc::new(store));
    server.seed = Some(8);
    (client, server)
}

#[cfg(test)]
mod tests {
    use veil_core::handshake::link::{establish_masked_channel, MemoryLink};

    use super::*;

    #[test]
    fn fixtures_complete_a_masked_handshake() {
        let (c, s) = demo_configs(ClientMode::Masked);
        assert!(establish_masked_channel(c, s, &mut MemoryLink::new()).is_ok());
    }
}
