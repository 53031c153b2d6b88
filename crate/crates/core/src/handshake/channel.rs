use crate::suite::{ChannelKeys, Direction};
use crate::wire::{ContentType, ProtocolVersion, RecordFrame};

use super::HandshakeError;

/// How a record reached the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    Plain,
    Sealed,
}

/// Record protection for one endpoint.
///
/// New keys are staged as `pending` and each direction switches over at its
/// ChangeCipherSpec. Once both directions have switched the pending keys
/// become active and the previous keys are dropped.
#[derive(Debug, Clone)]
pub(crate) struct Channel {
    write_dir: Direction,
    active: Option<ChannelKeys>,
    pending: Option<ChannelKeys>,
    write_switched: bool,
    read_switched: bool,
}

impl Channel {
    pub(crate) fn new(write_dir: Direction) -> Self {
        Channel {
            write_dir,
            active: None,
            pending: None,
            write_switched: false,
            read_switched: false,
        }
    }

    pub(crate) fn active(&self) -> Option<&ChannelKeys> {
        self.active.as_ref()
    }

    pub(crate) fn stage(&mut self, keys: ChannelKeys) {
        self.pending = Some(keys);
        self.write_switched = false;
        self.read_switched = false;
    }

    pub(crate) fn switch_write(&mut self) -> Result<(), HandshakeError> {
        if self.pending.is_none() || self.write_switched {
            return Err(HandshakeError::violation("change_cipher_spec without staged keys"));
        }
        self.write_switched = true;
        Ok(())
    }

    pub(crate) fn switch_read(&mut self) -> Result<(), HandshakeError> {
        if self.pending.is_none() || self.read_switched {
            return Err(HandshakeError::violation("change_cipher_spec without staged keys"));
        }
        self.read_switched = true;
        Ok(())
    }

    /// Hands out the staged keys once both directions use them.
    pub(crate) fn take_switched(&mut self) -> Result<ChannelKeys, HandshakeError> {
        if !(self.write_switched && self.read_switched) {
            return Err(HandshakeError::violation("cipher change incomplete"));
        }
        self.write_switched = false;
        self.read_switched = false;
        self.pending
            .take()
            .ok_or_else(|| HandshakeError::violation("no staged keys"))
    }

    pub(crate) fn commit(&mut self) -> Result<(), HandshakeError> {
        let keys = self.take_switched()?;
        self.active = Some(keys);
        Ok(())
    }

    pub(crate) fn replace(&mut self, keys: ChannelKeys) {
        self.active = Some(keys);
        self.pending = None;
        self.write_switched = false;
        self.read_switched = false;
    }

    fn write_keys(&mut self) -> Option<&mut ChannelKeys> {
        if self.write_switched {
            self.pending.as_mut()
        } else {
            self.active.as_mut()
        }
    }

    fn read_keys(&mut self) -> Option<&mut ChannelKeys> {
        if self.read_switched {
            self.pending.as_mut()
        } else {
            self.active.as_mut()
        }
    }

    /// Seals `frame` under the current write keys, or passes it through when
    /// no channel exists yet.
    pub(crate) fn protect(&mut self, frame: RecordFrame) -> Result<RecordFrame, HandshakeError> {
        let dir = self.write_dir;
        match self.write_keys() {
            Some(keys) => Ok(keys.seal(dir, &frame)?),
            None => Ok(frame),
        }
    }

    pub(crate) fn unprotect(
        &mut self,
        wire: &RecordFrame,
    ) -> Result<(RecordFrame, Arrival), HandshakeError> {
        if wire.version != ProtocolVersion::TLS12 {
            return Err(HandshakeError::violation(format!(
                "record version {}.{}",
                wire.version.major, wire.version.minor
            )));
        }
        let dir = self.write_dir.reverse();
        match (self.read_keys(), wire.content_type) {
            (Some(keys), ContentType::ApplicationData) => Ok((keys.open(dir, wire)?, Arrival::Sealed)),
            (None, ContentType::ApplicationData) => {
                Err(HandshakeError::violation("application data before any channel"))
            }
            _ => Ok((wire.clone(), Arrival::Plain)),
        }
    }
}
