use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::cert::CertEntry;
use crate::suite::{seeded_rng, Suite, MAX_SEALED_PLAINTEXT};
use crate::wire::{
    decode_handshake_prefix, encode_handshake, ClientHello, ContentType, HandshakeMessage,
    ProtocolVersion, RecordFrame, ServerHello, SniValue, WireError, RANDOM_LEN,
};

use super::channel::Arrival;
use super::{
    alert_code, legacy_fallback, rekey_apply, resumption_guard, server_select_certificate,
    AlertMessage, ConnectionState, FallbackDecision, GuardDecision, HandshakeError,
    HandshakePhase, Role, ServerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Expect {
    ClientHello,
    ClientKeyExchange,
    ChangeCipherSpec,
    Finished,
    Closed,
}

#[derive(Debug, Clone)]
struct InFlight {
    client_random: [u8; RANDOM_LEN],
    server_random: [u8; RANDOM_LEN],
    suite: Suite,
    offered_sni: Option<SniValue>,
    entry: CertEntry,
    secret: Vec<u8>,
    key_exchange_hash: [u8; 32],
}

#[derive(Debug)]
pub struct ServerConnection {
    cfg: ServerConfig,
    state: ConnectionState,
    expect: Expect,
    hs: Option<InFlight>,
    rng: ChaCha20Rng,
    fallback_sent: bool,
    app_in: Vec<u8>,
    pending_alert: Option<RecordFrame>,
    peer_closed: bool,
}

impl ServerConnection {
    pub fn new(cfg: ServerConfig) -> Self {
        let rng = match cfg.seed {
            Some(seed) => seeded_rng("server", seed),
            None => ChaCha20Rng::from_os_rng(),
        };
        ServerConnection {
            cfg,
            state: ConnectionState::new(Role::Server),
            expect: Expect::ClientHello,
            hs: None,
            rng,
            fallback_sent: false,
            app_in: Vec::new(),
            pending_alert: None,
            peer_closed: false,
        }
    }

    pub fn state(&self) -> &ConnectionState {
        &self.state
    }

    /// A channel exists and no handshake is in progress.
    pub fn is_established(&self) -> bool {
        self.state.phase != HandshakePhase::Plain && self.expect == Expect::ClientHello
    }

    pub fn is_closed(&self) -> bool {
        self.expect == Expect::Closed
    }

    pub fn peer_closed(&self) -> bool {
        self.peer_closed
    }

    /// The fallback alert went out on this connection.
    pub fn fallback_sent(&self) -> bool {
        self.fallback_sent
    }

    pub fn take_alert(&mut self) -> Option<RecordFrame> {
        self.pending_alert.take()
    }

    pub fn take_app_data(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.app_in)
    }

    pub fn send_app_data(&mut self, data: &[u8]) -> Result<Vec<RecordFrame>, HandshakeError> {
        if !self.is_established() {
            return Err(HandshakeError::InvalidPhase(self.state.phase));
        }
        data.chunks(MAX_SEALED_PLAINTEXT)
            .map(|chunk| {
                self.state
                    .channel
                    .protect(RecordFrame::new(ContentType::ApplicationData, chunk.to_vec()))
            })
            .collect()
    }

    pub fn close(&mut self) -> Result<Vec<RecordFrame>, HandshakeError> {
        if self.expect == Expect::Closed {
            return Ok(Vec::new());
        }
        self.expect = Expect::Closed;
        let frame = AlertMessage::warning(alert_code::CLOSE_NOTIFY).to_frame();
        Ok(vec![self.state.channel.protect(frame)?])
    }

    /// Feeds one wire record and returns the records to transmit. `None` is
    /// accepted for symmetry with the client and produces nothing.
    pub fn step(&mut self, incoming: Option<&RecordFrame>) -> Result<Vec<RecordFrame>, HandshakeError> {
        if self.expect == Expect::Closed {
            return Err(HandshakeError::Closed);
        }
        let Some(frame) = incoming else {
            return Ok(Vec::new());
        };
        self.receive(frame).inspect_err(|e| {
            self.expect = Expect::Closed;
            if let Some(alert) = e.alert() {
                self.pending_alert = self.state.channel.protect(alert.to_frame()).ok();
            }
        })
    }

    fn receive(&mut self, wire: &RecordFrame) -> Result<Vec<RecordFrame>, HandshakeError> {
        let (frame, arrival) = self.state.channel.unprotect(wire)?;
        let keyed = self.state.phase != HandshakePhase::Plain;
        match frame.content_type {
            ContentType::Alert => {
                let alert = AlertMessage::decode(&frame.payload)?;
                if alert == AlertMessage::warning(alert_code::CLOSE_NOTIFY) {
                    self.peer_closed = true;
                    self.expect = Expect::Closed;
                    return Ok(Vec::new());
                }
                Err(HandshakeError::AlertReceived(alert))
            }
            // Plaintext handshake records on a keyed channel still reach the
            // ClientHello handler so the guard can refuse them.
            ContentType::Handshake => {
                let mut out = Vec::new();
                let mut rest = frame.payload.as_slice();
                while !rest.is_empty() {
                    let (msg, used) = decode_handshake_prefix(rest)?.ok_or_else(|| {
                        HandshakeError::violation("handshake message split across records")
                    })?;
                    if keyed
                        && arrival == Arrival::Plain
                        && !matches!(msg, HandshakeMessage::ClientHello(_))
                    {
                        return Err(HandshakeError::violation(
                            "plaintext handshake on an established channel",
                        ));
                    }
                    out.extend(self.on_handshake(msg, &rest[..used], arrival)?);
                    rest = &rest[used..];
                }
                Ok(out)
            }
            _ if keyed && arrival == Arrival::Plain => Err(HandshakeError::violation(format!(
                "plaintext {} on an established channel",
                frame.content_type.name()
            ))),
            ContentType::ChangeCipherSpec => {
                if frame.payload != [1] {
                    return Err(WireError::Malformed("change_cipher_spec").into());
                }
                self.expecting(Expect::ChangeCipherSpec, "change_cipher_spec")?;
                self.state.channel.switch_read()?;
                self.expect = Expect::Finished;
                Ok(Vec::new())
            }
            ContentType::ApplicationData => {
                if !self.is_established() {
                    return Err(HandshakeError::violation("application data during handshake"));
                }
                self.app_in.extend_from_slice(&frame.payload);
                Ok(Vec::new())
            }
        }
    }

    fn expecting(&self, want: Expect, what: &str) -> Result<(), HandshakeError> {
        if self.expect != want {
            return Err(HandshakeError::violation(format!(
                "unexpected {what} while waiting for {:?}",
                self.expect
            )));
        }
        Ok(())
    }

    fn on_handshake(
        &mut self,
        msg: HandshakeMessage,
        raw: &[u8],
        arrival: Arrival,
    ) -> Result<Vec<RecordFrame>, HandshakeError> {
        match msg {
            HandshakeMessage::ClientHello(ch) => {
                self.expecting(Expect::ClientHello, "ClientHello")?;
                self.on_client_hello(ch, raw, arrival)
            }
            HandshakeMessage::ClientKeyExchange { key_share } => {
                self.expecting(Expect::ClientKeyExchange, "ClientKeyExchange")?;
                let hs = self
                    .hs
                    .as_mut()
                    .ok_or_else(|| HandshakeError::violation("no handshake in flight"))?;
                let secret = hs.suite.shared_secret(&hs.entry.keypair, &key_share)?;
                self.state.transcript.append(raw);
                let hash = self.state.transcript.hash();
                let keys =
                    hs.suite
                        .derive_channel_keys(&secret, &hash, &hs.client_random, &hs.server_random);
                hs.secret = secret;
                hs.key_exchange_hash = hash;
                self.state.channel.stage(keys);
                self.expect = Expect::ChangeCipherSpec;
                Ok(Vec::new())
            }
            HandshakeMessage::Finished { verify_data } => {
                self.expecting(Expect::Finished, "Finished")?;
                let hs = self
                    .hs
                    .take()
                    .ok_or_else(|| HandshakeError::violation("no handshake in flight"))?;
                let expected = hs.suite.finished_verify_data(
                    &hs.secret,
                    &hs.client_random,
                    &hs.server_random,
                    b"client finished",
                    &hs.key_exchange_hash,
                );
                if expected != verify_data {
                    return Err(HandshakeError::FinishedMismatch);
                }
                self.state.transcript.append(raw);
                self.finish(hs)
            }
            other => Err(HandshakeError::violation(format!(
                "server received {}",
                other.handshake_type().name()
            ))),
        }
    }

    fn on_client_hello(
        &mut self,
        ch: ClientHello,
        raw: &[u8],
        arrival: Arrival,
    ) -> Result<Vec<RecordFrame>, HandshakeError> {
        let offered = ch.sni().transpose()?;
        if self.state.phase == HandshakePhase::Plain {
            if let FallbackDecision::Alert(alert) = legacy_fallback(&self.cfg, offered.as_ref()) {
                self.fallback_sent = true;
                return Ok(vec![self.state.channel.protect(alert.to_frame())?]);
            }
        }
        if resumption_guard(&self.state, offered.as_ref(), arrival) == GuardDecision::Reject {
            return Err(HandshakeError::ResumptionRejected);
        }
        if ch.client_version != ProtocolVersion::TLS12 {
            return Err(HandshakeError::violation("client version"));
        }
        let under_tunnel = arrival == Arrival::Sealed;
        let entry =
            server_select_certificate(&self.cfg.store, offered.as_ref(), under_tunnel)?.clone();
        let suite = *self
            .cfg
            .suites
            .iter()
            .find(|s| ch.cipher_suites.contains(&s.id()))
            .ok_or(HandshakeError::NoCommonSuite)?;

        let mut server_random = [0u8; RANDOM_LEN];
        self.rng.fill_bytes(&mut server_random);
        let mut session_id = vec![0u8; 32];
        self.rng.fill_bytes(&mut session_id);

        self.state.transcript.reset();
        self.state.transcript.append(raw);
        let messages = [
            HandshakeMessage::ServerHello(ServerHello {
                server_version: ProtocolVersion::TLS12,
                random: server_random,
                session_id,
                chosen_suite: suite.id(),
                extensions: Vec::new(),
            }),
            HandshakeMessage::Certificate {
                cert_bytes: entry.doc.to_bytes(),
            },
            HandshakeMessage::ServerHelloDone,
        ];
        let mut out = Vec::with_capacity(messages.len());
        for msg in &messages {
            let bytes = encode_handshake(msg);
            self.state.transcript.append(&bytes);
            out.push(
                self.state
                    .channel
                    .protect(RecordFrame::new(ContentType::Handshake, bytes))?,
            );
        }
        self.hs = Some(InFlight {
            client_random: ch.random,
            server_random,
            suite,
            offered_sni: offered,
            entry,
            secret: Vec::new(),
            key_exchange_hash: [0; 32],
        });
        self.expect = Expect::ClientKeyExchange;
        Ok(out)
    }

    fn finish(&mut self, hs: InFlight) -> Result<Vec<RecordFrame>, HandshakeError> {
        let channel = &mut self.state.channel;
        let mut out = vec![channel.protect(RecordFrame::new(ContentType::ChangeCipherSpec, vec![1]))?];
        channel.switch_write()?;
        let verify_data = hs.suite.finished_verify_data(
            &hs.secret,
            &hs.client_random,
            &hs.server_random,
            b"server finished",
            &self.state.transcript.hash(),
        );
        let fin = encode_handshake(&HandshakeMessage::Finished { verify_data });
        self.state.transcript.append(&fin);
        out.push(
            self.state
                .channel
                .protect(RecordFrame::new(ContentType::Handshake, fin))?,
        );
        match self.state.phase {
            HandshakePhase::Plain => self.state.install_first(hs.entry.doc, hs.offered_sni)?,
            _ => {
                let name = hs
                    .offered_sni
                    .ok_or_else(|| HandshakeError::violation("second handshake without a name"))?;
                let keys = self.state.channel.take_switched()?;
                rekey_apply(&mut self.state, keys, hs.entry.doc, name)?;
            }
        }
        self.expect = Expect::ClientHello;
        Ok(out)
    }
}
