use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::cert::{validate_certificate, CertificateDoc, Validity};
use crate::suite::{seeded_rng, Suite, MAX_SEALED_PLAINTEXT};
use crate::wire::{
    decode_handshake_prefix, encode_handshake, encode_sni_extension, ClientHello, ContentType,
    HandshakeMessage, ProtocolVersion, RecordFrame, SniValue, RANDOM_LEN,
};

use super::channel::Arrival;
use super::{
    alert_code, client_sni_policy, now_or, rekey_apply, AlertMessage, ClientConfig,
    ClientMode, ConnectionState, HandshakeError, HandshakePhase, Role,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Expect {
    Start,
    ServerHello,
    Certificate,
    ServerHelloDone,
    ChangeCipherSpec,
    Finished,
    Established,
    Closed,
}

/// Bookkeeping for the handshake currently in flight.
#[derive(Debug, Clone)]
struct InFlight {
    client_random: [u8; RANDOM_LEN],
    server_random: [u8; RANDOM_LEN],
    suite: Suite,
    offered_sni: Option<SniValue>,
    certificate: Option<CertificateDoc>,
    secret: Vec<u8>,
}

#[derive(Debug)]
pub struct ClientConnection {
    cfg: ClientConfig,
    state: ConnectionState,
    expect: Expect,
    hs: Option<InFlight>,
    rng: ChaCha20Rng,
    fell_back: bool,
    handshakes: u8,
    app_in: Vec<u8>,
    pending_alert: Option<RecordFrame>,
    peer_closed: bool,
}

impl ClientConnection {
    pub fn new(cfg: ClientConfig) -> Self {
        let rng = match cfg.seed {
            Some(seed) => seeded_rng("client", seed),
            None => ChaCha20Rng::from_os_rng(),
        };
        ClientConnection {
            cfg,
            state: ConnectionState::new(Role::Client),
            expect: Expect::Start,
            hs: None,
            rng,
            fell_back: false,
            handshakes: 0,
            app_in: Vec::new(),
            pending_alert: None,
            peer_closed: false,
        }
    }

    pub fn state(&self) -> &ConnectionState {
        &self.state
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    /// All handshakes this connection's mode calls for have completed.
    pub fn is_established(&self) -> bool {
        self.expect == Expect::Established
    }

    /// True while the client is waiting for handshake messages.
    pub fn is_handshaking(&self) -> bool {
        !matches!(self.expect, Expect::Start | Expect::Established | Expect::Closed)
    }

    pub fn is_closed(&self) -> bool {
        self.expect == Expect::Closed
    }

    pub fn peer_closed(&self) -> bool {
        self.peer_closed
    }

    /// The server told us to retry with a single legacy handshake.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    pub fn handshakes_completed(&self) -> u8 {
        self.handshakes
    }

    /// Emits the first ClientHello.
    pub fn start(&mut self) -> Result<Vec<RecordFrame>, HandshakeError> {
        self.step(None)
    }

    /// Feeds one wire record (or `None` to kick off the handshake) and returns
    /// the records to transmit. After an error the connection is dead; any
    /// alert owed to the peer is available from [`Self::take_alert`].
    pub fn step(&mut self, incoming: Option<&RecordFrame>) -> Result<Vec<RecordFrame>, HandshakeError> {
        if self.expect == Expect::Closed {
            return Err(HandshakeError::Closed);
        }
        let result = match incoming {
            None if self.expect == Expect::Start => self.send_client_hello(),
            None => Ok(Vec::new()),
            Some(_) if self.expect == Expect::Start => {
                Err(HandshakeError::violation("record before ClientHello was sent"))
            }
            Some(frame) => self.receive(frame),
        };
        result.inspect_err(|e| self.fail(e))
    }

    fn fail(&mut self, e: &HandshakeError) {
        self.expect = Expect::Closed;
        if let Some(alert) = e.alert() {
            self.pending_alert = self.state.channel.protect(alert.to_frame()).ok();
        }
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

    /// Sends close_notify and shuts the connection.
    pub fn close(&mut self) -> Result<Vec<RecordFrame>, HandshakeError> {
        if self.expect == Expect::Closed {
            return Ok(Vec::new());
        }
        self.expect = Expect::Closed;
        let frame = AlertMessage::warning(alert_code::CLOSE_NOTIFY).to_frame();
        Ok(vec![self.state.channel.protect(frame)?])
    }

    fn send_client_hello(&mut self) -> Result<Vec<RecordFrame>, HandshakeError> {
        let offered_sni = client_sni_policy(self.state.phase, &self.cfg);
        let mut client_random = [0u8; RANDOM_LEN];
        self.rng.fill_bytes(&mut client_random);
        let mut session_id = vec![0u8; 32];
        self.rng.fill_bytes(&mut session_id);
        let hello = HandshakeMessage::ClientHello(ClientHello {
            client_version: ProtocolVersion::TLS12,
            random: client_random,
            session_id,
            cipher_suites: self.cfg.suites.iter().map(|s| s.id()).collect(),
            extensions: offered_sni.iter().map(encode_sni_extension).collect(),
        });
        let bytes = encode_handshake(&hello);
        self.state.transcript.reset();
        self.state.transcript.append(&bytes);
        self.hs = Some(InFlight {
            client_random,
            server_random: [0; RANDOM_LEN],
            suite: Suite::Standard,
            offered_sni,
            certificate: None,
            secret: Vec::new(),
        });
        self.expect = Expect::ServerHello;
        let frame = self
            .state
            .channel
            .protect(RecordFrame::new(ContentType::Handshake, bytes))?;
        Ok(vec![frame])
    }

    fn receive(&mut self, wire: &RecordFrame) -> Result<Vec<RecordFrame>, HandshakeError> {
        let (frame, arrival) = self.state.channel.unprotect(wire)?;
        let keyed = self.state.phase != HandshakePhase::Plain;
        if keyed && arrival == Arrival::Plain && frame.content_type != ContentType::Alert {
            return Err(HandshakeError::violation(format!(
                "plaintext {} on an established channel",
                frame.content_type.name()
            )));
        }
        match frame.content_type {
            ContentType::Alert => self.on_alert(AlertMessage::decode(&frame.payload)?),
            ContentType::ChangeCipherSpec => {
                if frame.payload != [1] {
                    return Err(crate::wire::WireError::Malformed("change_cipher_spec").into());
                }
                self.expecting(Expect::ChangeCipherSpec, "change_cipher_spec")?;
                self.state.channel.switch_read()?;
                self.expect = Expect::Finished;
                Ok(Vec::new())
            }
            ContentType::Handshake => {
                let mut out = Vec::new();
                let mut rest = frame.payload.as_slice();
                while !rest.is_empty() {
                    let (msg, used) = decode_handshake_prefix(rest)?
                        .ok_or_else(|| HandshakeError::violation("handshake message split across records"))?;
                    out.extend(self.on_handshake(msg, &rest[..used])?);
                    rest = &rest[used..];
                }
                Ok(out)
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

    fn on_alert(&mut self, alert: AlertMessage) -> Result<Vec<RecordFrame>, HandshakeError> {
        if alert == AlertMessage::warning(alert_code::CLOSE_NOTIFY) {
            self.peer_closed = true;
            self.expect = Expect::Closed;
            return Ok(Vec::new());
        }
        let can_fall_back = alert.is_fallback()
            && self.expect == Expect::ServerHello
            && self.state.phase == HandshakePhase::Plain
            && self.cfg.mode == ClientMode::Masked
            && !self.fell_back;
        if can_fall_back {
            self.fell_back = true;
            self.cfg.mode = ClientMode::Legacy;
            return self.send_client_hello();
        }
        Err(HandshakeError::AlertReceived(alert))
    }

    fn in_flight(&mut self) -> Result<&mut InFlight, HandshakeError> {
        self.hs
            .as_mut()
            .ok_or_else(|| HandshakeError::violation("no handshake in flight"))
    }

    fn on_handshake(
        &mut self,
        msg: HandshakeMessage,
        raw: &[u8],
    ) -> Result<Vec<RecordFrame>, HandshakeError> {
        match msg {
            HandshakeMessage::ServerHello(sh) => {
                self.expecting(Expect::ServerHello, "ServerHello")?;
                if sh.server_version != ProtocolVersion::TLS12 {
                    return Err(HandshakeError::violation("server version"));
                }
                let suite = Suite::try_from(sh.chosen_suite)?;
                if !self.cfg.suites.contains(&suite) {
                    return Err(HandshakeError::violation("server chose a suite we did not offer"));
                }
                let hs = self.in_flight()?;
                hs.server_random = sh.random;
                hs.suite = suite;
                self.state.transcript.append(raw);
                self.expect = Expect::Certificate;
                Ok(Vec::new())
            }
            HandshakeMessage::Certificate { cert_bytes } => {
                self.expecting(Expect::Certificate, "Certificate")?;
                let doc = CertificateDoc::from_bytes(&cert_bytes)
                    .map_err(|_| HandshakeError::CertificateRejected(Validity::BadSignature))?;
                // A nameless first handshake cannot know the fronting server's
                // name, so only a configured expectation is enforced there.
                let expected = if self.state.phase == HandshakePhase::Plain
                    && self.cfg.mode == ClientMode::Masked
                {
                    self.cfg.expect_front_name.clone()
                } else {
                    Some(self.cfg.target_sni.as_str().to_owned())
                };
                match validate_certificate(&doc, expected.as_deref(), now_or(self.cfg.now)) {
                    Validity::Valid => {}
                    other => return Err(HandshakeError::CertificateRejected(other)),
                }
                self.in_flight()?.certificate = Some(doc);
                self.state.transcript.append(raw);
                self.expect = Expect::ServerHelloDone;
                Ok(Vec::new())
            }
            HandshakeMessage::ServerHelloDone => {
                self.expecting(Expect::ServerHelloDone, "ServerHelloDone")?;
                self.state.transcript.append(raw);
                self.key_exchange()
            }
            HandshakeMessage::Finished { verify_data } => {
                self.expecting(Expect::Finished, "Finished")?;
                let hash = self.state.transcript.hash();
                let hs = self.in_flight()?.clone();
                let expected = hs.suite.finished_verify_data(
                    &hs.secret,
                    &hs.client_random,
                    &hs.server_random,
                    b"server finished",
                    &hash,
                );
                if expected != verify_data {
                    return Err(HandshakeError::FinishedMismatch);
                }
                self.state.transcript.append(raw);
                self.complete(hs)
            }
            other => Err(HandshakeError::violation(format!(
                "client received {}",
                other.handshake_type().name()
            ))),
        }
    }

    fn key_exchange(&mut self) -> Result<Vec<RecordFrame>, HandshakeError> {
        let seed = self.rng.next_u64();
        let hs = self.in_flight()?;
        let suite = hs.suite;
        let cert = hs
            .certificate
            .clone()
            .ok_or_else(|| HandshakeError::violation("no server certificate"))?;
        let ephemeral = suite.keypair_generate(Some(seed));
        let secret = suite.shared_secret(&ephemeral, &cert.public_part)?;
        hs.secret = secret.clone();
        let (cr, sr) = (hs.client_random, hs.server_random);

        let cke = encode_handshake(&HandshakeMessage::ClientKeyExchange {
            key_share: ephemeral.agreement_public().to_vec(),
        });
        self.state.transcript.append(&cke);
        let hash = self.state.transcript.hash();
        let keys = suite.derive_channel_keys(&secret, &hash, &cr, &sr);
        let verify_data = suite.finished_verify_data(&secret, &cr, &sr, b"client finished", &hash);

        let channel = &mut self.state.channel;
        let mut out = vec![
            channel.protect(RecordFrame::new(ContentType::Handshake, cke))?,
            channel.protect(RecordFrame::new(ContentType::ChangeCipherSpec, vec![1]))?,
        ];
        channel.stage(keys);
        channel.switch_write()?;
        let fin = encode_handshake(&HandshakeMessage::Finished { verify_data });
        self.state.transcript.append(&fin);
        out.push(
            self.state
                .channel
                .protect(RecordFrame::new(ContentType::Handshake, fin))?,
        );
        self.expect = Expect::ChangeCipherSpec;
        Ok(out)
    }

    fn complete(&mut self, hs: InFlight) -> Result<Vec<RecordFrame>, HandshakeError> {
        let cert = hs
            .certificate
            .ok_or_else(|| HandshakeError::violation("no server certificate"))?;
        self.hs = None;
        self.handshakes += 1;
        match self.state.phase {
            HandshakePhase::Plain => {
                self.state.install_first(cert, hs.offered_sni)?;
                match self.cfg.mode {
                    ClientMode::Masked => self.send_client_hello(),
                    ClientMode::Legacy => {
                        self.expect = Expect::Established;
                        Ok(Vec::new())
                    }
                }
            }
            HandshakePhase::FirstComplete => {
                let name = hs
                    .offered_sni
                    .ok_or_else(|| HandshakeError::violation("second handshake without a name"))?;
                let keys = self.state.channel.take_switched()?;
                rekey_apply(&mut self.state, keys, cert, name)?;
                self.expect = Expect::Established;
                Ok(Vec::new())
            }
            HandshakePhase::SecondComplete => Err(HandshakeError::InvalidPhase(self.state.phase)),
        }
    }
}
