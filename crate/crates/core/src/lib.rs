//! Masked server-name channel establishment.
//!
//! A client completes a first TLS-style handshake without any server name,
//! then runs a second handshake inside the resulting encrypted channel that
//! names the real host and rekeys the channel to that host's certificate.
//! The crate also contains the adversary this defeats: a passive observer that
//! extracts plaintext server names and a token-bucket shaper keyed on them.

pub mod cert;
pub mod handshake;
pub mod middlebox;
pub mod overhead;
pub mod suite;
pub mod wire;

pub use cert::{CertEntry, CertStore, CertificateDoc, Validity};
pub use handshake::{
    ClientConfig, ClientConnection, ClientMode, ConnectionState, HandshakeError, HandshakePhase,
    ServerConfig, ServerConnection,
};
pub use middlebox::{
    simulate_transfer, CaptureEvent, Classification, FlowId, FlowState, LinkSim, ShaperConfig,
    TransferReport,
};
pub use overhead::BenchReport;
pub use suite::{ChannelKeys, Direction, KeyPair, Suite};
pub use wire::{ContentType, RecordFrame, SniValue};
