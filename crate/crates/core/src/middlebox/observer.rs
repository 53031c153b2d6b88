use std::collections::BTreeMap;

use tracing::debug;

use super::{CaptureEvent, Classification, FlowId};
use crate::suite::Direction;
use crate::wire::{
    decode_handshake, ContentType, HandshakeMessage, RecordReader, EXT_SERVER_NAME,
};

/// Per-direction cap on bytes inspected before a flow with no usable
/// ClientHello is written off as Unknown.
pub const REASSEMBLY_BUDGET: usize = 16 * 1024;

const HANDSHAKE_HEADER_LEN: usize = 4;

/// Passive per-flow state: reassembles records from raw bytes and pulls the
/// server name out of the first plaintext ClientHello.
#[derive(Debug, Clone, Default)]
pub struct FlowState {
    pub id: FlowId,
    classification: Classification,
    pub records_seen: u64,
    pub bytes_forwarded: u64,
    pub first_byte_time: Option<u64>,
    pub last_byte_time: Option<u64>,
    pub plaintext_client_hellos: u32,
    pub sni_extensions: u32,
    /// Plaintext handshake message types in arrival order. Unrecognized codes
    /// are kept as raw bytes.
    pub plaintext_handshakes: Vec<(Direction, u8)>,
    readers: [RecordReader; 2],
    fragments: [Vec<u8>; 2],
    inspected: [usize; 2],
    gave_up: [bool; 2],
}

fn slot(dir: Direction) -> usize {
    match dir {
        Direction::ClientToServer => 0,
        Direction::ServerToClient => 1,
    }
}

impl FlowState {
    pub fn new(id: FlowId) -> Self {
        FlowState { id, ..Self::default() }
    }

    pub fn classification(&self) -> &Classification {
        &self.classification
    }

    fn settle(&mut self, verdict: Classification) {
        if self.classification == Classification::Pending {
            debug!(flow = %self.id, ?verdict, "flow classified");
            self.classification = verdict;
        }
    }

    /// Feeds bytes seen on the wire. Never fails: anything unparseable just
    /// stops inspection of that direction and, if still undecided, marks the
    /// flow Unknown.
    pub fn observe_bytes(&mut self, dir: Direction, bytes: &[u8], now_us: u64) {
        if bytes.is_empty() {
            return;
        }
        self.first_byte_time.get_or_insert(now_us);
        self.last_byte_time = Some(now_us);
        self.bytes_forwarded += bytes.len() as u64;

        let s = slot(dir);
        if self.gave_up[s] {
            return;
        }
        if !self.classification.is_final() {
            self.inspected[s] += bytes.len();
            if self.inspected[s] > REASSEMBLY_BUDGET {
                self.give_up(s);
                return;
            }
        }
        self.readers[s].push(bytes);
        loop {
            match self.readers[s].next_frame() {
                Ok(Some(frame)) => {
                    self.records_seen += 1;
                    match frame.content_type {
                        ContentType::Handshake => {
                            self.fragments[s].extend_from_slice(&frame.payload);
                            if !self.drain_handshakes(dir) {
                                self.give_up(s);
                                return;
                            }
                        }
                        ContentType::ChangeCipherSpec | ContentType::ApplicationData => {
                            self.settle(Classification::Unknown)
                        }
                        ContentType::Alert => {}
                    }
                }
                Ok(None) => break,
                Err(_) => {
                    self.give_up(s);
                    return;
                }
            }
        }
    }

    fn give_up(&mut self, s: usize) {
        self.gave_up[s] = true;
        self.readers[s] = RecordReader::new();
        self.fragments[s].clear();
        self.settle(Classification::Unknown);
    }

    /// Pulls complete handshake messages out of the fragment buffer. Returns
    /// false on a nonsensical length.
    fn drain_handshakes(&mut self, dir: Direction) -> bool {
        let s = slot(dir);
        loop {
            let buf = &self.fragments[s];
            if buf.len() < HANDSHAKE_HEADER_LEN {
                return true;
            }
            let len = u32::from_be_bytes([0, buf[1], buf[2], buf[3]]) as usize;
            if len > REASSEMBLY_BUDGET {
                return false;
            }
            let total = HANDSHAKE_HEADER_LEN + len;
            if buf.len() < total {
                return true;
            }
            let message: Vec<u8> = self.fragments[s].drain(..total).collect();
            self.plaintext_handshakes.push((dir, message[0]));
            if message[0] == 1 && dir == Direction::ClientToServer {
                self.on_client_hello(&message);
            }
        }
    }

    fn on_client_hello(&mut self, message: &[u8]) {
        self.plaintext_client_hellos += 1;
        let hello = match decode_handshake(message) {
            Ok(HandshakeMessage::ClientHello(hello)) => hello,
            _ => return self.settle(Classification::Unknown),
        };
        self.sni_extensions += hello
            .extensions
            .iter()
            .filter(|e| e.extension_type == EXT_SERVER_NAME)
            .count() as u32;
        match hello.sni() {
            Some(Ok(name)) => self.settle(Classification::Identified(name)),
            Some(Err(_)) => self.settle(Classification::Unknown),
            // Undecided until the plaintext part of the handshake ends.
            None => {}
        }
    }
}

/// Replays a capture through fresh observers, one per flow.
pub fn observe_capture<'a>(
    events: impl IntoIterator<Item = &'a CaptureEvent>,
) -> BTreeMap<FlowId, FlowState> {
    let mut flows = BTreeMap::new();
    for ev in events {
        flows
            .entry(ev.flow)
            .or_insert_with(|| FlowState::new(ev.flow))
            .observe_bytes(ev.direction, &ev.raw, ev.time_us);
    }
    flows
}
