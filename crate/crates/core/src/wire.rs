//! Record layer, handshake message and server-name extension codecs.
//!
//! Everything here is a pure function over byte slices so that the same code
//! serves the endpoints and the passive observer scanning raw streams.

use std::fmt;
use std::net::IpAddr;

use thiserror::Error;

/// Maximum record payload (2^14 bytes).
pub const MAX_RECORD_PAYLOAD: usize = 1 << 14;
/// Record header: type(1) || version(2) || length(2).
pub const RECORD_HEADER_LEN: usize = 5;

pub const EXT_SERVER_NAME: u16 = 0x0000;
const NAME_TYPE_HOST: u8 = 0x00;
const MAX_HOST_NAME_LEN: usize = 255;
const MAX_SESSION_ID_LEN: usize = 32;
pub const RANDOM_LEN: usize = 32;
pub const VERIFY_DATA_LEN: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("record payload of {0} bytes exceeds 2^14")]
    PayloadTooLarge(usize),
    #[error("invalid record content type {0:#04x}")]
    InvalidContentType(u8),
    #[error("unknown handshake type {0:#04x}")]
    UnknownHandshakeType(u8),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("length mismatch in {0}")]
    LengthMismatch(&'static str),
    #[error("malformed {0}")]
    Malformed(&'static str),
    #[error("invalid host name {0:?}")]
    InvalidHostName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ContentType {
    ChangeCipherSpec = 20,
    Alert = 21,
    Handshake = 22,
    ApplicationData = 23,
}

impl ContentType {
    pub fn name(self) -> &'static str {
        match self {
            ContentType::ChangeCipherSpec => "change_cipher_spec",
            ContentType::Alert => "alert",
            ContentType::Handshake => "handshake",
            ContentType::ApplicationData => "application_data",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            ContentType::ChangeCipherSpec,
            ContentType::Alert,
            ContentType::Handshake,
            ContentType::ApplicationData,
        ]
        .into_iter()
        .find(|t| t.name() == name)
    }
}

impl TryFrom<u8> for ContentType {
    type Error = WireError;

    fn try_from(b: u8) -> Result<Self, WireError> {
        match b {
            20 => Ok(ContentType::ChangeCipherSpec),
            21 => Ok(ContentType::Alert),
            22 => Ok(ContentType::Handshake),
            23 => Ok(ContentType::ApplicationData),
            other => Err(WireError::InvalidContentType(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProtocolVersion {
    pub major: u8,
    pub minor: u8,
}

impl ProtocolVersion {
    /// The only version endpoints speak: TLS 1.2 framing.
    pub const TLS12: ProtocolVersion = ProtocolVersion { major: 3, minor: 3 };

    fn to_bytes(self) -> [u8; 2] {
        [self.major, self.minor]
    }
}

/// One wire-level record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordFrame {
    pub content_type: ContentType,
    pub version: ProtocolVersion,
    pub payload: Vec<u8>,
}

impl RecordFrame {
    pub fn new(content_type: ContentType, payload: Vec<u8>) -> Self {
        RecordFrame {
            content_type,
            version: ProtocolVersion::TLS12,
            payload,
        }
    }

    /// Encoded size on the wire.
    pub fn wire_len(&self) -> usize {
        RECORD_HEADER_LEN + self.payload.len()
    }
}

pub fn encode_record(frame: &RecordFrame) -> Result<Vec<u8>, WireError> {
    let len = frame.payload.len();
    if len > MAX_RECORD_PAYLOAD {
        return Err(WireError::PayloadTooLarge(len));
    }
    let mut out = Vec::with_capacity(RECORD_HEADER_LEN + len);
    out.push(frame.content_type as u8);
    out.extend_from_slice(&frame.version.to_bytes());
    out.extend_from_slice(&(len as u16).to_be_bytes());
    out.extend_from_slice(&frame.payload);
    Ok(out)
}

/// Decodes one record from the front of `stream`.
///
/// `Ok(None)` means the stream does not yet hold a complete record. The
/// content type is checked as soon as the first byte is available, so garbage
/// is rejected without waiting for a full header.
pub fn decode_record(stream: &[u8]) -> Result<Option<(RecordFrame, usize)>, WireError> {
    let Some(&first) = stream.first() else {
        return Ok(None);
    };
    let content_type = ContentType::try_from(first)?;
    if stream.len() < RECORD_HEADER_LEN {
        return Ok(None);
    }
    let version = ProtocolVersion {
        major: stream[1],
        minor: stream[2],
    };
    let len = u16::from_be_bytes([stream[3], stream[4]]) as usize;
    if len > MAX_RECORD_PAYLOAD {
        return Err(WireError::PayloadTooLarge(len));
    }
    let total = RECORD_HEADER_LEN + len;
    if stream.len() < total {
        return Ok(None);
    }
    let frame = RecordFrame {
        content_type,
        version,
        payload: stream[RECORD_HEADER_LEN..total].to_vec(),
    };
    Ok(Some((frame, total)))
}

/// Accumulates bytes and yields complete records.
#[derive(Debug, Default, Clone)]
pub struct RecordReader {
    buf: Vec<u8>,
}

impl RecordReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn next_frame(&mut self) -> Result<Option<RecordFrame>, WireError> {
        match decode_record(&self.buf)? {
            Some((frame, used)) => {
                self.buf.drain(..used);
                Ok(Some(frame))
            }
            None => Ok(None),
        }
    }
}

/// 16-bit cipher suite identifier. Unknown ids survive decoding untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CipherSuiteId(pub u16);

impl fmt::Display for CipherSuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub extension_type: u16,
    pub extension_data: Vec<u8>,
}

/// A validated host name for the server-name extension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SniValue(String);

impl SniValue {
    pub fn new(name: impl Into<String>) -> Result<Self, WireError> {
        let name = name.into();
        let bad = name.is_empty()
            || name.len() > MAX_HOST_NAME_LEN
            || name.ends_with('.')
            || !name.bytes().all(|b| b.is_ascii_graphic())
            || is_address_literal(&name);
        if bad {
            return Err(WireError::InvalidHostName(name));
        }
        Ok(SniValue(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SniValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for SniValue {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, WireError> {
        SniValue::new(s)
    }
}

fn is_address_literal(name: &str) -> bool {
    let bare = name
        .strip_prefix('[')
        .and_then(|n| n.strip_suffix(']'))
        .unwrap_or(name);
    bare.parse::<IpAddr>().is_ok()
}

pub fn encode_sni_extension(name: &SniValue) -> Extension {
    let host = name.as_str().as_bytes();
    let entry_len = 1 + 2 + host.len();
    let mut data = Vec::with_capacity(2 + entry_len);
    data.extend_from_slice(&(entry_len as u16).to_be_bytes());
    data.push(NAME_TYPE_HOST);
    data.extend_from_slice(&(host.len() as u16).to_be_bytes());
    data.extend_from_slice(host);
    Extension {
        extension_type: EXT_SERVER_NAME,
        extension_data: data,
    }
}

pub fn decode_sni_extension(ext: &Extension) -> Result<SniValue, WireError> {
    if ext.extension_type != EXT_SERVER_NAME {
        return Err(WireError::Malformed("server_name extension type"));
    }
    let mut r = Reader::new(&ext.extension_data);
    let list = r.vec_u16("server_name_list")?;
    r.finish("server_name extension")?;
    let mut entries = Reader::new(list);
    let name_type = entries.u8("name_type")?;
    if name_type != NAME_TYPE_HOST {
        return Err(WireError::Malformed("server_name name_type"));
    }
    let host = entries.vec_u16("host_name")?;
    // Only a single host_name entry is meaningful.
    entries.finish("server_name_list")?;
    let host =
        std::str::from_utf8(host).map_err(|_| WireError::Malformed("host_name encoding"))?;
    SniValue::new(host)
}

/// Returns the decoded server name if the extension list carries one.
pub fn find_sni(extensions: &[Extension]) -> Option<Result<SniValue, WireError>> {
    extensions
        .iter()
        .find(|e| e.extension_type == EXT_SERVER_NAME)
        .map(decode_sni_extension)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum HandshakeType {
    ClientHello = 1,
    ServerHello = 2,
    Certificate = 11,
    ServerHelloDone = 14,
    ClientKeyExchange = 16,
    Finished = 20,
}

impl HandshakeType {
    pub fn name(self) -> &'static str {
        match self {
            HandshakeType::ClientHello => "client_hello",
            HandshakeType::ServerHello => "server_hello",
            HandshakeType::Certificate => "certificate",
            HandshakeType::ServerHelloDone => "server_hello_done",
            HandshakeType::ClientKeyExchange => "client_key_exchange",
            HandshakeType::Finished => "finished",
        }
    }
}

impl TryFrom<u8> for HandshakeType {
    type Error = WireError;

    fn try_from(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            1 => HandshakeType::ClientHello,
            2 => HandshakeType::ServerHello,
            11 => HandshakeType::Certificate,
            14 => HandshakeType::ServerHelloDone,
            16 => HandshakeType::ClientKeyExchange,
            20 => HandshakeType::Finished,
            other => return Err(WireError::UnknownHandshakeType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientHello {
    pub client_version: ProtocolVersion,
    pub random: [u8; RANDOM_LEN],
    pub session_id: Vec<u8>,
    pub cipher_suites: Vec<CipherSuiteId>,
    pub extensions: Vec<Extension>,
}

impl ClientHello {
    pub fn sni(&self) -> Option<Result<SniValue, WireError>> {
        find_sni(&self.extensions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerHello {
    pub server_version: ProtocolVersion,
    pub random: [u8; RANDOM_LEN],
    pub session_id: Vec<u8>,
    pub chosen_suite: CipherSuiteId,
    pub extensions: Vec<Extension>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandshakeMessage {
    ClientHello(ClientHello),
    ServerHello(ServerHello),
    Certificate { cert_bytes: Vec<u8> },
    ServerHelloDone,
    ClientKeyExchange { key_share: Vec<u8> },
    Finished { verify_data: [u8; VERIFY_DATA_LEN] },
}

impl HandshakeMessage {
    pub fn handshake_type(&self) -> HandshakeType {
        match self {
            HandshakeMessage::ClientHello(_) => HandshakeType::ClientHello,
            HandshakeMessage::ServerHello(_) => HandshakeType::ServerHello,
            HandshakeMessage::Certificate { .. } => HandshakeType::Certificate,
            HandshakeMessage::ServerHelloDone => HandshakeType::ServerHelloDone,
            HandshakeMessage::ClientKeyExchange { .. } => HandshakeType::ClientKeyExchange,
            HandshakeMessage::Finished { .. } => HandshakeType::Finished,
        }
    }
}

/// Encodes a handshake message with its 4-byte header.
///
/// Panics only on values that violate the type's own limits (session id
/// over 32 bytes, bodies past 2^24), which no decoder can produce.
pub fn encode_handshake(msg: &HandshakeMessage) -> Vec<u8> {
    let mut body = Vec::new();
    match msg {
        HandshakeMessage::ClientHello(ch) => {
            body.extend_from_slice(&ch.client_version.to_bytes());
            body.extend_from_slice(&ch.random);
            put_vec_u8(&mut body, &ch.session_id);
            let suites: Vec<u8> = ch
                .cipher_suites
                .iter()
                .flat_map(|s| s.0.to_be_bytes())
                .collect();
            put_vec_u16(&mut body, &suites);
            // compression_methods: null only
            body.extend_from_slice(&[1, 0]);
            put_extensions(&mut body, &ch.extensions);
        }
        HandshakeMessage::ServerHello(sh) => {
            body.extend_from_slice(&sh.server_version.to_bytes());
            body.extend_from_slice(&sh.random);
            put_vec_u8(&mut body, &sh.session_id);
            body.extend_from_slice(&sh.chosen_suite.0.to_be_bytes());
            body.push(0);
            put_extensions(&mut body, &sh.extensions);
        }
        HandshakeMessage::Certificate { cert_bytes } => {
            let mut entry = Vec::with_capacity(3 + cert_bytes.len());
            put_vec_u24(&mut entry, cert_bytes);
            put_vec_u24(&mut body, &entry);
        }
        HandshakeMessage::ServerHelloDone => {}
        HandshakeMessage::ClientKeyExchange { key_share } => put_vec_u16(&mut body, key_share),
        HandshakeMessage::Finished { verify_data } => body.extend_from_slice(verify_data),
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.push(msg.handshake_type() as u8);
    put_vec_u24(&mut out, &body);
    out
}

/// Decodes exactly one handshake message occupying all of `bytes`.
pub fn decode_handshake(bytes: &[u8]) -> Result<HandshakeMessage, WireError> {
    match decode_handshake_prefix(bytes)? {
        Some((msg, used)) if used == bytes.len() => Ok(msg),
        Some(_) => Err(WireError::LengthMismatch("handshake message")),
        None => Err(WireError::Truncated("handshake message")),
    }
}

/// Decodes one handshake message from the front of `bytes`; `Ok(None)` when
/// the declared body is not fully present yet.
pub fn decode_handshake_prefix(
    bytes: &[u8],
) -> Result<Option<(HandshakeMessage, usize)>, WireError> {
    if bytes.len() < 4 {
        return Ok(None);
    }
    let kind = HandshakeType::try_from(bytes[0])?;
    let len = u32::from_be_bytes([0, bytes[1], bytes[2], bytes[3]]) as usize;
    if bytes.len() < 4 + len {
        return Ok(None);
    }
    let msg = decode_body(kind, &bytes[4..4 + len])?;
    Ok(Some((msg, 4 + len)))
}

fn decode_body(kind: HandshakeType, body: &[u8]) -> Result<HandshakeMessage, WireError> {
    let mut r = Reader::new(body);
    let msg = match kind {
        HandshakeType::ClientHello => {
            let client_version = r.version()?;
            let random = r.array::<RANDOM_LEN>("client random")?;
            let session_id = r.session_id()?;
            let suites = r.vec_u16("cipher_suites")?;
            if suites.len() % 2 != 0 {
                return Err(WireError::Malformed("cipher_suites length"));
            }
            let cipher_suites = suites
                .chunks_exact(2)
                .map(|c| CipherSuiteId(u16::from_be_bytes([c[0], c[1]])))
                .collect();
            let compression = r.vec_u8("compression_methods")?;
            if !compression.contains(&0) {
                return Err(WireError::Malformed("compression_methods"));
            }
            let extensions = r.extensions()?;
            HandshakeMessage::ClientHello(ClientHello {
                client_version,
                random,
                session_id,
                cipher_suites,
                extensions,
            })
        }
        HandshakeType::ServerHello => {
            let server_version = r.version()?;
            let random = r.array::<RANDOM_LEN>("server random")?;
            let session_id = r.session_id()?;
            let chosen_suite = CipherSuiteId(r.u16("cipher_suite")?);
            if r.u8("compression_method")? != 0 {
                return Err(WireError::Malformed("compression_method"));
            }
            let extensions = r.extensions()?;
            HandshakeMessage::ServerHello(ServerHello {
                server_version,
                random,
                session_id,
                chosen_suite,
                extensions,
            })
        }
        HandshakeType::Certificate => {
            let list = r.vec_u24("certificate_list")?;
            let mut entries = Reader::new(list);
            let cert_bytes = entries.vec_u24("certificate")?.to_vec();
            entries.finish("certificate_list")?;
            HandshakeMessage::Certificate { cert_bytes }
        }
        HandshakeType::ServerHelloDone => HandshakeMessage::ServerHelloDone,
        HandshakeType::ClientKeyExchange => HandshakeMessage::ClientKeyExchange {
            key_share: r.vec_u16("key_share")?.to_vec(),
        },
        HandshakeType::Finished => HandshakeMessage::Finished {
            verify_data: r.array::<VERIFY_DATA_LEN>("verify_data")?,
        },
    };
    r.finish(kind.name())?;
    Ok(msg)
}

fn put_vec_u8(out: &mut Vec<u8>, data: &[u8]) {
    let len = u8::try_from(data.len()).expect("vector exceeds u8 length prefix");
    out.push(len);
    out.extend_from_slice(data);
}

fn put_vec_u16(out: &mut Vec<u8>, data: &[u8]) {
    let len = u16::try_from(data.len()).expect("vector exceeds u16 length prefix");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(data);
}

fn put_vec_u24(out: &mut Vec<u8>, data: &[u8]) {
    assert!(data.len() < 1 << 24, "vector exceeds u24 length prefix");
    out.extend_from_slice(&(data.len() as u32).to_be_bytes()[1..]);
    out.extend_from_slice(data);
}

fn put_extensions(out: &mut Vec<u8>, extensions: &[Extension]) {
    if extensions.is_empty() {
        return;
    }
    let mut block = Vec::new();
    for ext in extensions {
        block.extend_from_slice(&ext.extension_type.to_be_bytes());
        put_vec_u16(&mut block, &ext.extension_data);
    }
    put_vec_u16(out, &block);
}

/// Bounds-checked big-endian cursor.
struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated(what));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], WireError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N, what)?);
        Ok(out)
    }

    fn version(&mut self) -> Result<ProtocolVersion, WireError> {
        let [major, minor] = self.array::<2>("version")?;
        Ok(ProtocolVersion { major, minor })
    }

    fn vec_u8(&mut self, what: &'static str) -> Result<&'a [u8], WireError> {
        let n = self.u8(what)? as usize;
        self.take(n, what)
    }

    fn vec_u16(&mut self, what: &'static str) -> Result<&'a [u8], WireError> {
        let n = self.u16(what)? as usize;
        self.take(n, what)
    }

    fn vec_u24(&mut self, what: &'static str) -> Result<&'a [u8], WireError> {
        let b = self.take(3, what)?;
        let n = u32::from_be_bytes([0, b[0], b[1], b[2]]) as usize;
        self.take(n, what)
    }

    fn session_id(&mut self) -> Result<Vec<u8>, WireError> {
        let id = self.vec_u8("session_id")?;
        if id.len() > MAX_SESSION_ID_LEN {
            return Err(WireError::Malformed("session_id length"));
        }
        Ok(id.to_vec())
    }

    fn extensions(&mut self) -> Result<Vec<Extension>, WireError> {
        if self.remaining() == 0 {
            return Ok(Vec::new());
        }
        let mut block = Reader::new(self.vec_u16("extensions")?);
        let mut out = Vec::new();
        while block.remaining() > 0 {
            let extension_type = block.u16("extension type")?;
            let extension_data = block.vec_u16("extension data")?.to_vec();
            out.push(Extension {
                extension_type,
                extension_data,
            });
        }
        Ok(out)
    }

    fn finish(&self, what: &'static str) -> Result<(), WireError> {
        if self.remaining() != 0 {
            return Err(WireError::LengthMismatch(what));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_empty_handshake_record() {
        let f = RecordFrame::new(ContentType::Handshake, vec![]);
        assert_eq!(encode_record(&f).unwrap(), [0x16, 0x03, 0x03, 0x00, 0x00]);
    }

    #[test]
    fn encode_application_data_record() {
        let f = RecordFrame::new(ContentType::ApplicationData, vec![0xAA, 0xBB, 0xCC]);
        assert_eq!(
            encode_record(&f).unwrap(),
            [0x17, 0x03, 0x03, 0x00, 0x03, 0xAA, 0xBB, 0xCC]
        );
    }

    #[test]
    fn oversize_payload_rejected() {
        let f = RecordFrame::new(ContentType::ApplicationData, vec![0; MAX_RECORD_PAYLOAD + 1]);
        assert_eq!(
            encode_record(&f),
            Err(WireError::PayloadTooLarge(MAX_RECORD_PAYLOAD + 1))
        );
        let f = RecordFrame::new(ContentType::ApplicationData, vec![0; MAX_RECORD_PAYLOAD]);
        assert_eq!(encode_record(&f).unwrap().len(), MAX_RECORD_PAYLOAD + 5);
    }

    #[test]
    fn decode_record_cases() {
        let bytes = [0x17, 0x03, 0x03, 0x00, 0x03, 0xAA, 0xBB, 0xCC];
        let (frame, used) = decode_record(&bytes).unwrap().unwrap();
        assert_eq!(used, 8);
        assert_eq!(frame.content_type, ContentType::ApplicationData);
        assert_eq!(frame.payload, [0xAA, 0xBB, 0xCC]);

        assert_eq!(decode_record(&bytes[..4]), Ok(None));
        assert_eq!(decode_record(&bytes[..7]), Ok(None));
        assert_eq!(
            decode_record(&[0x2A, 3, 3, 0, 0]),
            Err(WireError::InvalidContentType(0x2A))
        );
        assert_eq!(
            decode_record(&[0x17, 3, 3, 0x40, 0x01]),
            Err(WireError::PayloadTooLarge(MAX_RECORD_PAYLOAD + 1))
        );
    }

    #[test]
    fn reader_yields_frames_in_order() {
        let mut r = RecordReader::new();
        r.push(&[0x14, 3, 3, 0, 1, 1, 0x17, 3]);
        let f = r.next_frame().unwrap().unwrap();
        assert_eq!(f.content_type, ContentType::ChangeCipherSpec);
        assert_eq!(r.next_frame().unwrap(), None);
        r.push(&[3, 0, 0]);
        let f = r.next_frame().unwrap().unwrap();
        assert_eq!(f.content_type, ContentType::ApplicationData);
        assert_eq!(r.buffered(), 0);
    }

    #[test]
    fn sni_extension_vectors() {
        let ext = encode_sni_extension(&SniValue::new("example.com").unwrap());
        assert_eq!(ext.extension_type, 0x0000);
        assert_eq!(
            ext.extension_data,
            [
                0x00, 0x0E, 0x00, 0x00, 0x0B, 0x65, 0x78, 0x61, 0x6D, 0x70, 0x6C, 0x65, 0x2E, 0x63,
                0x6F, 0x6D
            ]
        );
        let ext = encode_sni_extension(&SniValue::new("a").unwrap());
        assert_eq!(ext.extension_data, [0x00, 0x04, 0x00, 0x00, 0x01, 0x61]);
    }

    #[test]
    fn sni_extension_matches_published_capture() {
        // server_name extension of the ClientHello walked through at
        // tls13.xargs.org: type 00 00, length 00 18, then the data below.
        let captured = hex::decode("00160000136578616d706c652e756c666865696d2e6e6574").unwrap();
        let ext = encode_sni_extension(&SniValue::new("example.ulfheim.net").unwrap());
        assert_eq!(ext.extension_data, captured);
        assert_eq!(ext.extension_data.len(), 0x18);
    }

    #[test]
    fn host_name_validation() {
        for bad in [
            "",
            "192.168.0.1",
            "10.0.0.1",
            "::1",
            "[2001:db8::1]",
            "example.com.",
            "has space.example",
            "caf\u{e9}.example",
        ] {
            assert!(SniValue::new(bad).is_err(), "{bad:?} accepted");
        }
        assert!(SniValue::new("x".repeat(255)).is_ok());
        assert!(SniValue::new("x".repeat(256)).is_err());
        assert!(SniValue::new("video.example").is_ok());
    }

    #[test]
    fn decode_sni_extension_cases() {
        let name = SniValue::new("example.com").unwrap();
        let ext = encode_sni_extension(&name);
        assert_eq!(decode_sni_extension(&ext).unwrap(), name);

        let mut truncated = ext.clone();
        truncated.extension_data.truncate(10);
        assert!(decode_sni_extension(&truncated).is_err());

        let mut long_list = ext.clone();
        long_list.extension_data[1] = 0x20;
        assert!(decode_sni_extension(&long_list).is_err());

        let mut wrong_type = ext.clone();
        wrong_type.extension_data[2] = 0x01;
        assert_eq!(
            decode_sni_extension(&wrong_type),
            Err(WireError::Malformed("server_name name_type"))
        );
    }

    fn hello(extensions: Vec<Extension>) -> HandshakeMessage {
        HandshakeMessage::ClientHello(ClientHello {
            client_version: ProtocolVersion::TLS12,
            random: [7; 32],
            session_id: vec![1, 2, 3],
            cipher_suites: vec![CipherSuiteId(1), CipherSuiteId(0xFF)],
            extensions,
        })
    }

    #[test]
    fn client_hello_without_extensions_omits_block() {
        let msg = hello(vec![]);
        let bytes = encode_handshake(&msg);
        // header(4) version(2) random(32) sid(1+3) suites(2+4) compression(2)
        assert_eq!(bytes.len(), 4 + 2 + 32 + 4 + 6 + 2);
        assert_eq!(&bytes[1..4], &[0, 0, 46]);
        assert_eq!(decode_handshake(&bytes).unwrap(), msg);
    }

    #[test]
    fn client_hello_with_sni_round_trips() {
        let name = SniValue::new("example.com").unwrap();
        let msg = hello(vec![encode_sni_extension(&name)]);
        let bytes = encode_handshake(&msg);
        let back = decode_handshake(&bytes).unwrap();
        assert_eq!(back, msg);
        let HandshakeMessage::ClientHello(ch) = back else {
            unreachable!()
        };
        assert_eq!(ch.sni().unwrap().unwrap(), name);
    }

    #[test]
    fn handshake_length_errors() {
        let mut bytes = encode_handshake(&hello(vec![]));
        bytes[3] += 1;
        assert_eq!(
            decode_handshake(&bytes),
            Err(WireError::Truncated("handshake message"))
        );
        let mut bytes = encode_handshake(&HandshakeMessage::ServerHelloDone);
        bytes[0] = 0x63;
        assert_eq!(
            decode_handshake(&bytes),
            Err(WireError::UnknownHandshakeType(0x63))
        );
        let mut fin = encode_handshake(&HandshakeMessage::Finished {
            verify_data: [1; 12],
        });
        fin.push(0);
        assert!(decode_handshake(&fin).is_err());
    }

    #[test]
    fn unknown_suite_and_extension_preserved() {
        let msg = HandshakeMessage::ServerHello(ServerHello {
            server_version: ProtocolVersion::TLS12,
            random: [9; 32],
            session_id: vec![],
            chosen_suite: CipherSuiteId(0xBEEF),
            extensions: vec![Extension {
                extension_type: 0x4444,
                extension_data: vec![1, 2],
            }],
        });
        assert_eq!(decode_handshake(&encode_handshake(&msg)).unwrap(), msg);
    }
}
