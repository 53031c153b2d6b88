//! The on-path adversary and the simulated testbed around it.

mod capture;
mod observer;
mod shaper;
mod sim;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use capture::{capture_read, capture_write, CaptureEvent, CaptureSummary, ParseError};
pub use observer::{observe_capture, FlowState, REASSEMBLY_BUDGET};
pub use shaper::{parse_rate, parse_rate_map, shape, ShaperConfig, ShaperError, TokenBucket};
pub use sim::{simulate_transfer, LinkSim, TransferReport, TunnelStats, VirtualClock};

/// One simulated or captured transport connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FlowId {
    pub client: u32,
    pub server: u32,
    pub connection: u32,
}

impl FlowId {
    pub fn new(client: u32, server: u32, connection: u32) -> Self {
        FlowId { client, server, connection }
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.client, self.server, self.connection)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("bad flow id {0:?}, expected client:server:connection")]
pub struct BadFlowId(String);

impl FromStr for FlowId {
    type Err = BadFlowId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadFlowId(s.to_owned());
        let mut parts = s.split(':').map(|p| p.parse::<u32>().map_err(|_| bad()));
        let id = FlowId {
            client: parts.next().ok_or_else(bad)??,
            server: parts.next().ok_or_else(bad)??,
            connection: parts.next().ok_or_else(bad)??,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(id)
    }
}

/// What the observer has concluded about a flow.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Classification {
    #[default]
    Pending,
    Identified(crate::wire::SniValue),
    Unknown,
}

impl Classification {
    pub fn is_final(&self) -> bool {
        !matches!(self, Classification::Pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_id_text_round_trip() {
        let id = FlowId::new(3, 7, 42);
        assert_eq!(id.to_string(), "3:7:42");
        assert_eq!("3:7:42".parse::<FlowId>().unwrap(), id);
        for bad in ["", "1:2", "1:2:3:4", "a:b:c", "-1:0:0"] {
            assert!(bad.parse::<FlowId>().is_err(), "{bad}");
        }
    }
}
