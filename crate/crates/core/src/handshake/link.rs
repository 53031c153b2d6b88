//! In-memory, ordered, lossless byte pipe between one client and one server.

use std::collections::VecDeque;

use crate::suite::Direction;
use crate::wire::{encode_record, RecordFrame, RecordReader};

use super::{ClientConfig, ClientConnection, HandshakeError, ServerConfig, ServerConnection};

type Tamper = Box<dyn FnMut(Direction, usize, &mut Vec<u8>)>;

/// Both directions of a single transport connection.
///
/// Every record is encoded to bytes on the way in and re-parsed on the way
/// out, and the exact bytes are kept in [`MemoryLink::wire`].
#[derive(Default)]
pub struct MemoryLink {
    wire: Vec<(Direction, Vec<u8>)>,
    queues: [VecDeque<Vec<u8>>; 2],
    readers: [RecordReader; 2],
    tamper: Option<Tamper>,
    connections_opened: u32,
}

fn slot(dir: Direction) -> usize {
    match dir {
        Direction::ClientToServer => 0,
        Direction::ServerToClient => 1,
    }
}

impl MemoryLink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs a hook that may rewrite each record's bytes in flight. It
    /// receives the direction and the record's index in [`MemoryLink::wire`].
    pub fn with_tamper(tamper: impl FnMut(Direction, usize, &mut Vec<u8>) + 'static) -> Self {
        MemoryLink {
            tamper: Some(Box::new(tamper)),
            ..Self::default()
        }
    }

    /// Transport connections opened over this link's lifetime.
    pub fn connections_opened(&self) -> u32 {
        self.connections_opened
    }

    /// Every record as transmitted, in order.
    pub fn wire(&self) -> &[(Direction, Vec<u8>)] {
        &self.wire
    }

    /// Concatenated byte stream for one direction.
    pub fn stream(&self, dir: Direction) -> Vec<u8> {
        self.wire
            .iter()
            .filter(|(d, _)| *d == dir)
            .flat_map(|(_, b)| b.iter().copied())
            .collect()
    }

    pub fn push(&mut self, dir: Direction, frames: impl IntoIterator<Item = RecordFrame>) {
        for frame in frames {
            let mut bytes = encode_record(&frame).expect("endpoints never emit oversize records");
            if let Some(tamper) = self.tamper.as_mut() {
                tamper(dir, self.wire.len(), &mut bytes);
            }
            self.wire.push((dir, bytes.clone()));
            self.queues[slot(dir)].push_back(bytes);
        }
    }

    /// Delivers queued bytes until both directions are idle. The first
    /// endpoint error ends the run after its alert, if any, has been handed
    /// to the peer.
    pub fn run(
        &mut self,
        client: &mut ClientConnection,
        server: &mut ServerConnection,
    ) -> Result<(), HandshakeError> {
        loop {
            let dir = if !self.queues[0].is_empty() {
                Direction::ClientToServer
            } else if !self.queues[1].is_empty() {
                Direction::ServerToClient
            } else {
                return Ok(());
            };
            let bytes = self.queues[slot(dir)].pop_front().expect("queue checked non-empty");
            self.readers[slot(dir)].push(&bytes);
            loop {
                let frame = match self.readers[slot(dir)].next_frame() {
                    Ok(Some(frame)) => frame,
                    Ok(None) => break,
                    Err(e) => return Err(e.into()),
                };
                let result = match dir {
                    Direction::ClientToServer => server.step(Some(&frame)),
                    Direction::ServerToClient => client.step(Some(&frame)),
                };
                match result {
                    Ok(out) => self.push(dir.reverse(), out),
                    Err(e) => {
                        let alert = match dir {
                            Direction::ClientToServer => server.take_alert(),
                            Direction::ServerToClient => client.take_alert(),
                        };
                        if let Some(alert) = alert {
                            self.push(dir.reverse(), [alert]);
                            let _ = self.deliver_alert(dir.reverse(), client, server);
                        }
                        return Err(e);
                    }
                }
            }
        }
    }

    fn deliver_alert(
        &mut self,
        dir: Direction,
        client: &mut ClientConnection,
        server: &mut ServerConnection,
    ) -> Result<(), HandshakeError> {
        while let Some(bytes) = self.queues[slot(dir)].pop_front() {
            self.readers[slot(dir)].push(&bytes);
            while let Some(frame) = self.readers[slot(dir)].next_frame()? {
                match dir {
                    Direction::ClientToServer => server.step(Some(&frame))?,
                    Direction::ServerToClient => client.step(Some(&frame))?,
                };
            }
        }
        Ok(())
    }
}

/// Runs every handshake the client's mode calls for over `link`, which
/// counts as one transport connection.
pub fn establish_masked_channel(
    client_cfg: ClientConfig,
    server_cfg: ServerConfig,
    link: &mut MemoryLink,
) -> Result<(ClientConnection, ServerConnection), HandshakeError> {
    let mut client = ClientConnection::new(client_cfg);
    let mut server = ServerConnection::new(server_cfg);
    link.connections_opened += 1;
    let hello = client.start()?;
    link.push(Direction::ClientToServer, hello);
    link.run(&mut client, &mut server)?;
    if !client.is_established() || !server.is_established() {
        return Err(HandshakeError::Stalled);
    }
    Ok((client, server))
}
