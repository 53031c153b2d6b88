use std::collections::BTreeMap;

use tracing::{debug, warn};

use super::{shape, CaptureEvent, Classification, FlowId, FlowState, ShaperConfig, TokenBucket};
use crate::handshake::{
    ClientConfig, ClientConnection, HandshakeError, HandshakePhase, ServerConfig, ServerConnection,
};
use crate::suite::Direction;
use crate::wire::{decode_record, encode_record, RecordFrame};

const WINDOW_US: u64 = 1_000_000;
const REQUEST_LEN: usize = 8;

/// Monotone simulated time in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now_us: u64,
}

impl VirtualClock {
    pub fn now(&self) -> u64 {
        self.now_us
    }

    pub fn advance_to(&mut self, t_us: u64) {
        assert!(t_us >= self.now_us, "virtual clock moved backward: {} -> {t_us}", self.now_us);
        self.now_us = t_us;
    }
}

/// Symmetric point-to-point link with the middlebox at the receiving end of
/// serialization and the propagation delay after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkSim {
    pub capacity_bps: u64,
    pub propagation_ms: u64,
}

impl LinkSim {
    pub fn new(capacity_bps: u64, propagation_ms: u64) -> Self {
        LinkSim { capacity_bps, propagation_ms }
    }

    pub fn serialization_us(&self, len: usize) -> u64 {
        (len as u128 * 8 * 1_000_000).div_ceil(self.capacity_bps.max(1) as u128) as u64
    }

    fn propagation_us(&self) -> u64 {
        self.propagation_ms * 1000
    }
}

/// Handshake traffic carried inside the first channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TunnelStats {
    pub flights: u32,
    pub records: u32,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct TransferReport {
    pub flow: FlowId,
    /// First endpoint error, if any. The rest of the report still describes
    /// what crossed the wire.
    pub error: Option<HandshakeError>,
    pub observer: FlowState,
    /// Completion time of each client handshake, in order.
    pub handshake_complete_us: Vec<u64>,
    pub established_sni: Option<String>,
    pub certificate_subject: Option<String>,
    pub client_phase: HandshakePhase,
    pub fell_back: bool,
    pub payload_received: u64,
    pub transfer_done_us: Option<u64>,
    /// Bulk-transfer wire bytes reaching the client per one-second window.
    pub timeline: Vec<(u64, f64)>,
    pub tunnel: TunnelStats,
    pub capture: Vec<CaptureEvent>,
}

impl TransferReport {
    pub fn classification(&self) -> &Classification {
        self.observer.classification()
    }

    pub fn handshake_durations_us(&self) -> Vec<u64> {
        let mut prev = 0;
        self.handshake_complete_us
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    /// Mean throughput with the first and last windows dropped, or over all
    /// windows when there are fewer than three.
    pub fn steady_state_bps(&self) -> Option<f64> {
        let rates: Vec<f64> = self.timeline.iter().map(|(_, bps)| *bps).collect();
        let core = if rates.len() >= 3 { &rates[1..rates.len() - 1] } else { &rates[..] };
        (!core.is_empty()).then(|| core.iter().sum::<f64>() / core.len() as f64)
    }

    /// Whether `needle` occurs anywhere in either direction's byte stream.
    pub fn wire_contains(&self, needle: &[u8]) -> bool {
        [Direction::ClientToServer, Direction::ServerToClient].iter().any(|&dir| {
            let stream: Vec<u8> = self
                .capture
                .iter()
                .filter(|e| e.direction == dir)
                .flat_map(|e| e.raw.iter().copied())
                .collect();
            !needle.is_empty() && stream.windows(needle.len()).any(|w| w == needle)
        })
    }
}

#[derive(Debug)]
enum Event {
    /// Last bit has left the sender and reached the middlebox.
    Ingress { dir: Direction, bytes: Vec<u8>, bulk: bool },
    Deliver { dir: Direction, bytes: Vec<u8>, bulk: bool },
}

struct Sim<'a> {
    shaper: &'a ShaperConfig,
    link: LinkSim,
    clock: VirtualClock,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    link_free: [u64; 2],
    buckets: [TokenBucket; 2],
    client: ClientConnection,
    server: ServerConnection,
    report: TransferReport,
    payload_bytes: u64,
    request_sent: bool,
    request: Vec<u8>,
    responded: bool,
    windows: BTreeMap<u64, u64>,
}

fn slot(dir: Direction) -> usize {
    match dir {
        Direction::ClientToServer => 0,
        Direction::ServerToClient => 1,
    }
}

impl Sim<'_> {
    fn schedule(&mut self, at: u64, ev: Event) {
        self.seq += 1;
        self.queue.insert((at, self.seq), ev);
    }

    fn transmit(&mut self, dir: Direction, frames: Vec<RecordFrame>, bulk: bool) {
        let now = self.clock.now();
        for frame in frames {
            let bytes = encode_record(&frame).expect("endpoints never emit oversize records");
            let s = slot(dir);
            let done = now.max(self.link_free[s]) + self.link.serialization_us(bytes.len());
            self.link_free[s] = done;
            self.schedule(done, Event::Ingress { dir, bytes, bulk });
        }
    }

    fn fail(&mut self, e: HandshakeError) {
        debug!(error = %e, at_us = self.clock.now(), "endpoint failed");
        if self.report.error.is_none() {
            self.report.error = Some(e);
        }
    }

    fn count_tunnel(&mut self, frames: &[RecordFrame], before: HandshakePhase, after: HandshakePhase, client: bool) {
        let tunnel = before == HandshakePhase::FirstComplete
            || (client && before == HandshakePhase::Plain && after == HandshakePhase::FirstComplete);
        if tunnel && !frames.is_empty() {
            let t = &mut self.report.tunnel;
            t.flights += 1;
            t.records += frames.len() as u32;
            t.bytes += frames.iter().map(|f| f.wire_len() as u64).sum::<u64>();
        }
    }

    fn run(&mut self) {
        match self.client.start() {
            Ok(hello) => self.transmit(Direction::ClientToServer, hello, false),
            Err(e) => self.fail(e),
        }
        while let Some(((at, _), ev)) = self.queue.pop_first() {
            self.clock.advance_to(at);
            match ev {
                Event::Ingress { dir, bytes, bulk } => self.ingress(dir, bytes, bulk),
                Event::Deliver { dir, bytes, bulk } => self.deliver(dir, bytes, bulk),
            }
        }
    }

    fn ingress(&mut self, dir: Direction, bytes: Vec<u8>, bulk: bool) {
        let now = self.clock.now();
        self.report.observer.observe_bytes(dir, &bytes, now);
        let release = shape(
            self.shaper,
            &self.report.observer,
            &mut self.buckets[slot(dir)],
            bytes.len() as u64,
            now,
        );
        self.report
            .capture
            .push(CaptureEvent::new(now, self.report.flow, dir, bytes.clone()));
        self.schedule(release + self.link.propagation_us(), Event::Deliver { dir, bytes, bulk });
    }

    fn deliver(&mut self, dir: Direction, bytes: Vec<u8>, bulk: bool) {
        let now = self.clock.now();
        if bulk {
            *self.windows.entry(now / WINDOW_US).or_default() += bytes.len() as u64;
        }
        let frame = match decode_record(&bytes) {
            Ok(Some((frame, _))) => frame,
            // A single record always arrives whole on this link.
            other => return warn!(?other, "undecodable record in simulation"),
        };
        match dir {
            Direction::ClientToServer => self.server_receives(&frame),
            Direction::ServerToClient => self.client_receives(&frame),
        }
    }

    fn client_receives(&mut self, frame: &RecordFrame) {
        if self.client.is_closed() {
            return;
        }
        let before = self.client.state().phase;
        let completed = self.client.handshakes_completed();
        match self.client.step(Some(frame)) {
            Ok(out) => {
                self.count_tunnel(&out, before, self.client.state().phase, true);
                self.transmit(Direction::ClientToServer, out, false);
            }
            Err(e) => {
                self.fail(e);
                if let Some(alert) = self.client.take_alert() {
                    self.transmit(Direction::ClientToServer, vec![alert], false);
                }
                return;
            }
        }
        if self.client.handshakes_completed() > completed {
            self.report.handshake_complete_us.push(self.clock.now());
        }
        self.report.payload_received += self.client.take_app_data().len() as u64;
        if self.payload_bytes > 0
            && self.report.transfer_done_us.is_none()
            && self.report.payload_received >= self.payload_bytes
        {
            self.report.transfer_done_us = Some(self.clock.now());
        }
        if self.client.is_established() && self.payload_bytes > 0 && !self.request_sent {
            self.request_sent = true;
            match self.client.send_app_data(&self.payload_bytes.to_be_bytes()) {
                Ok(out) => self.transmit(Direction::ClientToServer, out, false),
                Err(e) => self.fail(e),
            }
        }
    }

    fn server_receives(&mut self, frame: &RecordFrame) {
        if self.server.is_closed() {
            return;
        }
        let before = self.server.state().phase;
        match self.server.step(Some(frame)) {
            Ok(out) => {
                self.count_tunnel(&out, before, self.server.state().phase, false);
                self.transmit(Direction::ServerToClient, out, false);
            }
            Err(e) => {
                self.fail(e);
                if let Some(alert) = self.server.take_alert() {
                    self.transmit(Direction::ServerToClient, vec![alert], false);
                }
                return;
            }
        }
        self.request.extend(self.server.take_app_data());
        if !self.responded && self.request.len() >= REQUEST_LEN {
            self.responded = true;
            let len = u64::from_be_bytes(self.request[..REQUEST_LEN].try_into().expect("eight bytes"));
            let body: Vec<u8> = (0..len).map(|i| (i % 251) as u8).collect();
            match self.server.send_app_data(&body) {
                Ok(out) => self.transmit(Direction::ServerToClient, out, true),
                Err(e) => self.fail(e),
            }
        }
    }
}

/// Runs the client's handshake(s) and then a download of `payload_bytes`
/// through an observing, shaping middlebox on a virtual clock. The result
/// depends only on the configs and their seeds.
pub fn simulate_transfer(
    client_cfg: ClientConfig,
    server_cfg: ServerConfig,
    shaper_cfg: &ShaperConfig,
    link: &LinkSim,
    payload_bytes: u64,
) -> TransferReport {
    let flow = FlowId::new(0, 1, 0);
    let mut sim = Sim {
        shaper: shaper_cfg,
        link: *link,
        clock: VirtualClock::default(),
        queue: BTreeMap::new(),
        seq: 0,
        link_free: [0; 2],
        buckets: Default::default(),
        client: ClientConnection::new(client_cfg),
        server: ServerConnection::new(server_cfg),
        report: TransferReport {
            flow,
            error: None,
            observer: FlowState::new(flow),
            handshake_complete_us: Vec::new(),
            established_sni: None,
            certificate_subject: None,
            client_phase: HandshakePhase::Plain,
            fell_back: false,
            payload_received: 0,
            transfer_done_us: None,
            timeline: Vec::new(),
            tunnel: TunnelStats::default(),
            capture: Vec::new(),
        },
        payload_bytes,
        request_sent: false,
        request: Vec::new(),
        responded: false,
        windows: BTreeMap::new(),
    };
    sim.run();

    if sim.report.error.is_none() && !(sim.client.is_established() && sim.server.is_established()) {
        sim.report.error = Some(HandshakeError::Stalled);
    }
    let state = sim.client.state();
    let mut report = sim.report;
    report.client_phase = state.phase;
    report.established_sni = state.established_sni.as_ref().map(|s| s.as_str().to_owned());
    report.certificate_subject = state.certificate.as_ref().map(|c| c.subject_name.clone());
    report.fell_back = sim.client.fell_back();
    if let Some((&last, _)) = sim.windows.last_key_value() {
        report.timeline = (0..=last)
            .map(|w| {
                let bytes = sim.windows.get(&w).copied().unwrap_or(0);
                (w, (bytes * 8) as f64 * 1e6 / WINDOW_US as f64)
            })
            .collect();
    }
    report
}
