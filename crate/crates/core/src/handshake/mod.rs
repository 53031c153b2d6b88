//! Client and server handshake state machines.
//!
//! A masked connection runs two complete handshakes over one transport. The
//! first carries no server name and completes against the fronting server's
//! default certificate. The second runs entirely inside the channel the
//! first one produced, names the intended host, and rekeys the channel to that
//! host's certificate. A legacy connection runs one handshake with the name in
//! the clear.

mod channel;
mod client;
pub mod link;
mod server;

use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::cert::{CertEntry, CertError, CertStore, CertificateDoc, Validity};
use crate::suite::{ChannelKeys, CryptoError, Suite};
use crate::wire::{ContentType, RecordFrame, SniValue, WireError};

pub use channel::Arrival;
pub use client::ClientConnection;
pub use link::{establish_masked_channel, MemoryLink};
pub use server::ServerConnection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HandshakePhase {
    /// No channel yet.
    Plain,
    /// Channel keyed by the first handshake.
    FirstComplete,
    /// Channel rekeyed by the in-tunnel handshake.
    SecondComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientMode {
    Masked,
    Legacy,
}

impl std::str::FromStr for ClientMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "masked" => Ok(ClientMode::Masked),
            "legacy" => Ok(ClientMode::Legacy),
            other => Err(format!("unknown mode {other:?} (expected masked or legacy)")),
        }
    }
}

impl fmt::Display for ClientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClientMode::Masked => "masked",
            ClientMode::Legacy => "legacy",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub target_sni: SniValue,
    pub mode: ClientMode,
    /// Offered suites, most preferred first.
    pub suites: Vec<Suite>,
    /// Subject the default certificate must carry, if the operator knows it.
    pub expect_front_name: Option<String>,
    pub seed: Option<u64>,
    /// Clock used for certificate validity checks; `None` reads the system
    /// clock.
    pub now: Option<DateTime<Utc>>,
}

impl ClientConfig {
    pub fn new(target_sni: SniValue, mode: ClientMode) -> Self {
        ClientConfig {
            target_sni,
            mode,
            suites: vec![Suite::Standard],
            expect_front_name: None,
            seed: None,
            now: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub store: Arc<CertStore>,
    pub legacy_only: bool,
    /// Acceptable suites, most preferred first.
    pub suites: Vec<Suite>,
    pub seed: Option<u64>,
}

impl ServerConfig {
    pub fn new(store: Arc<CertStore>) -> Self {
        ServerConfig {
            store,
            legacy_only: false,
            suites: vec![Suite::Standard, Suite::Null],
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertLevel {
    Warning = 1,
    Fatal = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlertMessage {
    pub level: AlertLevel,
    pub code: u8,
}

pub mod alert_code {
    pub const CLOSE_NOTIFY: u8 = 0;
    pub const UNEXPECTED_MESSAGE: u8 = 10;
    pub const BAD_RECORD_MAC: u8 = 20;
    pub const HANDSHAKE_FAILURE: u8 = 40;
    pub const BAD_CERTIFICATE: u8 = 42;
    pub const CERTIFICATE_EXPIRED: u8 = 45;
    pub const ILLEGAL_PARAMETER: u8 = 47;
    pub const DECODE_ERROR: u8 = 50;
    pub const DECRYPT_ERROR: u8 = 51;
    pub const UNRECOGNIZED_NAME: u8 = 112;
    /// Sent at warning level by a server that only runs single legacy
    /// handshakes. Shares its number with `unrecognized_name`, which is only
    /// ever sent fatal; the level tells them apart.
    pub const MASKED_HANDSHAKE_UNSUPPORTED: u8 = 0x70;
}

impl AlertMessage {
    pub fn fatal(code: u8) -> Self {
        AlertMessage {
            level: AlertLevel::Fatal,
            code,
        }
    }

    pub fn warning(code: u8) -> Self {
        AlertMessage {
            level: AlertLevel::Warning,
            code,
        }
    }

    pub fn is_fallback(&self) -> bool {
        *self == AlertMessage::warning(alert_code::MASKED_HANDSHAKE_UNSUPPORTED)
    }

    pub fn to_frame(self) -> RecordFrame {
        RecordFrame::new(ContentType::Alert, vec![self.level as u8, self.code])
    }

    pub fn decode(payload: &[u8]) -> Result<AlertMessage, WireError> {
        let [level, code] = payload else {
            return Err(WireError::Malformed("alert length"));
        };
        let level = match level {
            1 => AlertLevel::Warning,
            2 => AlertLevel::Fatal,
            _ => return Err(WireError::Malformed("alert level")),
        };
        Ok(AlertMessage { level, code: *code })
    }

    pub fn name(&self) -> &'static str {
        use alert_code::*;
        match (self.level, self.code) {
            (AlertLevel::Warning, MASKED_HANDSHAKE_UNSUPPORTED) => "masked_handshake_unsupported",
            (_, CLOSE_NOTIFY) => "close_notify",
            (_, UNEXPECTED_MESSAGE) => "unexpected_message",
            (_, BAD_RECORD_MAC) => "bad_record_mac",
            (_, HANDSHAKE_FAILURE) => "handshake_failure",
            (_, BAD_CERTIFICATE) => "bad_certificate",
            (_, CERTIFICATE_EXPIRED) => "certificate_expired",
            (_, ILLEGAL_PARAMETER) => "illegal_parameter",
            (_, DECODE_ERROR) => "decode_error",
            (_, DECRYPT_ERROR) => "decrypt_error",
            (_, UNRECOGNIZED_NAME) => "unrecognized_name",
            _ => "unknown_alert",
        }
    }
}

impl fmt::Display for AlertMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.level {
            AlertLevel::Warning => "warning",
            AlertLevel::Fatal => "fatal",
        };
        write!(f, "{level} {} ({:#04x})", self.name(), self.code)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HandshakeError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("server certificate rejected: {0:?}")]
    CertificateRejected(Validity),
    #[error("finished verification failed")]
    FinishedMismatch,
    #[error("no certificate for server name {0:?}")]
    UnrecognizedName(Option<String>),
    #[error("no mutually supported cipher suite")]
    NoCommonSuite,
    #[error("handshake request would resume with a different identity")]
    ResumptionRejected,
    #[error("operation not valid in phase {0:?}")]
    InvalidPhase(HandshakePhase),
    #[error("peer sent alert: {0}")]
    AlertReceived(AlertMessage),
    #[error("link went idle before the handshake completed")]
    Stalled,
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Decode(#[from] WireError),
}

impl HandshakeError {
    fn violation(msg: impl Into<String>) -> Self {
        HandshakeError::ProtocolViolation(msg.into())
    }

    /// The alert a peer should be told about this failure, if any.
    pub fn alert(&self) -> Option<AlertMessage> {
        use alert_code::*;
        let code = match self {
            HandshakeError::ProtocolViolation(_) | HandshakeError::InvalidPhase(_) => {
                UNEXPECTED_MESSAGE
            }
            HandshakeError::CertificateRejected(Validity::Expired) => CERTIFICATE_EXPIRED,
            HandshakeError::CertificateRejected(_) => BAD_CERTIFICATE,
            HandshakeError::FinishedMismatch => DECRYPT_ERROR,
            HandshakeError::UnrecognizedName(_) => UNRECOGNIZED_NAME,
            HandshakeError::NoCommonSuite | HandshakeError::ResumptionRejected => HANDSHAKE_FAILURE,
            HandshakeError::Crypto(CryptoError::AuthFailure) => BAD_RECORD_MAC,
            HandshakeError::Crypto(CryptoError::MalformedPublicValue) => ILLEGAL_PARAMETER,
            HandshakeError::Crypto(_) => HANDSHAKE_FAILURE,
            HandshakeError::Decode(_) => DECODE_ERROR,
            HandshakeError::AlertReceived(_) | HandshakeError::Stalled | HandshakeError::Closed => {
                return None
            }
        };
        Some(AlertMessage::fatal(code))
    }
}

/// Per-connection state both roles share.
#[derive(Debug, Clone)]
pub struct ConnectionState {
    pub phase: HandshakePhase,
    pub role: Role,
    pub transcript: crate::suite::Transcript,
    pub(crate) channel: channel::Channel,
    pub established_sni: Option<SniValue>,
    /// Certificate bound to the current channel (sent by the server, received
    /// by the client).
    pub certificate: Option<CertificateDoc>,
}

impl ConnectionState {
    fn new(role: Role) -> Self {
        let dir = match role {
            Role::Client => crate::suite::Direction::ClientToServer,
            Role::Server => crate::suite::Direction::ServerToClient,
        };
        ConnectionState {
            phase: HandshakePhase::Plain,
            role,
            transcript: Default::default(),
            channel: channel::Channel::new(dir),
            established_sni: None,
            certificate: None,
        }
    }

    /// Keys protecting the established channel; present iff phase is not
    /// `Plain`.
    pub fn active_keys(&self) -> Option<&ChannelKeys> {
        self.channel.active()
    }

    /// Installs the keys of the first completed handshake.
    fn install_first(
        &mut self,
        cert: CertificateDoc,
        sni: Option<SniValue>,
    ) -> Result<(), HandshakeError> {
        if self.phase != HandshakePhase::Plain {
            return Err(HandshakeError::InvalidPhase(self.phase));
        }
        self.channel.commit()?;
        self.phase = HandshakePhase::FirstComplete;
        self.certificate = Some(cert);
        self.established_sni = sni;
        Ok(())
    }
}

/// Swaps the channel over to the second handshake's keys and identity,
/// discarding the first handshake's keys.
pub fn rekey_apply(
    state: &mut ConnectionState,
    new_keys: ChannelKeys,
    new_cert: CertificateDoc,
    new_sni: SniValue,
) -> Result<(), HandshakeError> {
    if state.phase != HandshakePhase::FirstComplete {
        return Err(HandshakeError::InvalidPhase(state.phase));
    }
    state.channel.replace(new_keys);
    state.phase = HandshakePhase::SecondComplete;
    state.certificate = Some(new_cert);
    state.established_sni = Some(new_sni);
    Ok(())
}

/// Which server name a client puts in its next ClientHello.
pub fn client_sni_policy(phase: HandshakePhase, cfg: &ClientConfig) -> Option<SniValue> {
    match (cfg.mode, phase) {
        (ClientMode::Masked, HandshakePhase::Plain) => None,
        _ => Some(cfg.target_sni.clone()),
    }
}

/// Certificate choice for an incoming ClientHello. A nameless request gets
/// the default certificate, unless it arrived inside the tunnel where the
/// name is mandatory.
pub fn server_select_certificate<'a>(
    store: &'a CertStore,
    offered: Option<&SniValue>,
    under_tunnel: bool,
) -> Result<&'a CertEntry, HandshakeError> {
    if offered.is_none() && under_tunnel {
        return Err(HandshakeError::UnrecognizedName(None));
    }
    store.lookup(offered).map_err(|e| match e {
        CertError::NotFound(name) => HandshakeError::UnrecognizedName(Some(name)),
        other => HandshakeError::violation(other.to_string()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardDecision {
    Accept,
    Reject,
}

/// Decides whether a handshake request on an already keyed connection may
/// proceed. Only the sealed request immediately following a nameless first
/// handshake is accepted, whatever name it carries; it is a fresh
/// negotiation, not a resumption of the first one.
pub fn resumption_guard(
    state: &ConnectionState,
    offered_sni: Option<&SniValue>,
    arrival: Arrival,
) -> GuardDecision {
    let _ = offered_sni;
    match (state.phase, arrival) {
        (HandshakePhase::Plain, Arrival::Plain) => GuardDecision::Accept,
        (HandshakePhase::FirstComplete, Arrival::Sealed) if state.established_sni.is_none() => {
            GuardDecision::Accept
        }
        _ => GuardDecision::Reject,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackDecision {
    Alert(AlertMessage),
    Proceed,
}

/// A legacy-only server answers a nameless first ClientHello with the
/// fallback alert instead of its default certificate.
pub fn legacy_fallback(cfg: &ServerConfig, first_hello_sni: Option<&SniValue>) -> FallbackDecision {
    if cfg.legacy_only && first_hello_sni.is_none() {
        FallbackDecision::Alert(AlertMessage::warning(
            alert_code::MASKED_HANDSHAKE_UNSUPPORTED,
        ))
    } else {
        FallbackDecision::Proceed
    }
}

fn now_or(clock: Option<DateTime<Utc>>) -> DateTime<Utc> {
    clock.unwrap_or_else(Utc::now)
}
