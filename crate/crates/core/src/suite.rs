//! Cipher suites: key agreement, key schedule, record protection, signatures.
//!
//! Two suites are registered. [`Suite::Standard`] (`0x0001`) is X25519 key
//! agreement, HKDF-SHA256 key derivation, ChaCha20-Poly1305 record protection
//! and Ed25519 signatures. [`Suite::Null`] (`0x00FF`) replaces every transform
//! with identity or a fixed constant so protocol tests are reproducible byte
//! for byte. It provides no security whatsoever.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::wire::{
    CipherSuiteId, ContentType, ProtocolVersion, RecordFrame, MAX_RECORD_PAYLOAD, RANDOM_LEN,
    VERIFY_DATA_LEN,
};

pub const STANDARD_SUITE: CipherSuiteId = CipherSuiteId(0x0001);
pub const NULL_SUITE: CipherSuiteId = CipherSuiteId(0x00FF);

/// Reproducible generator for one purpose. Distinct labels give unrelated
/// streams, so a seed shared across roles never repeats key material.
pub(crate) fn seeded_rng(label: &str, seed: u64) -> ChaCha20Rng {
    let digest = Sha256::new()
        .chain_update(label.as_bytes())
        .chain_update(seed.to_be_bytes())
        .finalize();
    ChaCha20Rng::from_seed(digest.into())
}

const KEY_LEN: usize = 32;
const IV_LEN: usize = 12;
const TAG_LEN: usize = 16;
const SECRET_LEN: usize = 32;
const HALF_PUBLIC_LEN: usize = 32;

/// Bytes added to a record by sealing: the inner content type plus the tag.
pub const SEAL_OVERHEAD: usize = 1 + TAG_LEN;
/// Largest inner payload that still fits in one sealed record.
pub const MAX_SEALED_PLAINTEXT: usize = MAX_RECORD_PAYLOAD - SEAL_OVERHEAD;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("cipher suite {0} is not registered")]
    UnknownSuite(CipherSuiteId),
    #[error("malformed public value")]
    MalformedPublicValue,
    #[error("record authentication failed")]
    AuthFailure,
    #[error("sequence number space exhausted")]
    SequenceExhausted,
    #[error("plaintext of {0} bytes does not fit in a sealed record")]
    PlaintextTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Standard,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::ClientToServer => Direction::ServerToClient,
            Direction::ServerToClient => Direction::ClientToServer,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::ClientToServer => "C2S",
            Direction::ServerToClient => "S2C",
        }
    }
}

/// Private seed plus derived public values.
///
/// Under the standard suite the public part is the X25519 public key followed
/// by the Ed25519 verifying key, both derived from the one 32-byte seed with
/// domain separation. The private part never goes on the wire.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    private_part: [u8; SECRET_LEN],
    public_part: Vec<u8>,
}

impl KeyPair {
    pub fn public_part(&self) -> &[u8] {
        &self.public_part
    }

    /// The key-agreement half of the public part, as sent in a key exchange.
    pub fn agreement_public(&self) -> &[u8] {
        &self.public_part[..HALF_PUBLIC_LEN]
    }

    pub fn private_part(&self) -> &[u8; SECRET_LEN] {
        &self.private_part
    }

    /// Rebuilds a key pair from its stored private seed.
    pub fn from_private(suite: Suite, private_part: [u8; SECRET_LEN]) -> KeyPair {
        let public_part = match suite {
            Suite::Standard => {
                let agreement = x25519_dalek::StaticSecret::from(agreement_seed(&private_part));
                let signing = SigningKey::from_bytes(&signing_seed(&private_part));
                let mut public = x25519_dalek::PublicKey::from(&agreement).as_bytes().to_vec();
                public.extend_from_slice(signing.verifying_key().as_bytes());
                public
            }
            Suite::Null => {
                let mut h = Sha256::new();
                h.update(b"veil null public");
                h.update(private_part);
                let half = h.finalize();
                [half.as_slice(), half.as_slice()].concat()
            }
        };
        KeyPair {
            private_part,
            public_part,
        }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_part", &hex::encode(&self.public_part))
            .finish_non_exhaustive()
    }
}

fn tagged_hash(tag: &[u8], data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(data);
    h.finalize().into()
}

fn agreement_seed(private: &[u8; SECRET_LEN]) -> [u8; 32] {
    tagged_hash(b"veil agreement", private)
}

fn signing_seed(private: &[u8; SECRET_LEN]) -> [u8; 32] {
    tagged_hash(b"veil signing", private)
}

/// Per-direction record protection state.
#[derive(Clone, PartialEq, Eq)]
struct DirectionKeys {
    key: [u8; KEY_LEN],
    iv: [u8; IV_LEN],
    seq: u64,
}

impl DirectionKeys {
    fn nonce(&self) -> [u8; IV_LEN] {
        let mut nonce = self.iv;
        for (n, s) in nonce[IV_LEN - 8..].iter_mut().zip(self.seq.to_be_bytes()) {
            *n ^= s;
        }
        nonce
    }
}

/// Symmetric keys for both directions of one channel.
#[derive(Clone, PartialEq, Eq)]
pub struct ChannelKeys {
    suite: Suite,
    client_write: DirectionKeys,
    server_write: DirectionKeys,
}

impl fmt::Debug for ChannelKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelKeys")
            .field("suite", &self.suite)
            .field("client_seq", &self.client_write.seq)
            .field("server_seq", &self.server_write.seq)
            .finish_non_exhaustive()
    }
}

impl ChannelKeys {
    pub fn suite(&self) -> Suite {
        self.suite
    }

    pub fn client_seq(&self) -> u64 {
        self.client_write.seq
    }

    pub fn server_seq(&self) -> u64 {
        self.server_write.seq
    }

    /// True when both directions use the same key material, ignoring counters.
    pub fn same_material(&self, other: &ChannelKeys) -> bool {
        self.suite == other.suite
            && self.client_write.key == other.client_write.key
            && self.client_write.iv == other.client_write.iv
            && self.server_write.key == other.server_write.key
            && self.server_write.iv == other.server_write.iv
    }

    fn direction_mut(&mut self, dir: Direction) -> &mut DirectionKeys {
        match dir {
            Direction::ClientToServer => &mut self.client_write,
            Direction::ServerToClient => &mut self.server_write,
        }
    }

    #[cfg(test)]
    pub(crate) fn set_seq(&mut self, dir: Direction, seq: u64) {
        self.direction_mut(dir).seq = seq;
    }

    /// Protects `frame` for sending in `dir`. The result is always an
    /// application_data record; the inner content type travels encrypted.
    pub fn seal(&mut self, dir: Direction, frame: &RecordFrame) -> Result<RecordFrame, CryptoError> {
        if frame.payload.len() > MAX_SEALED_PLAINTEXT {
            return Err(CryptoError::PlaintextTooLarge(frame.payload.len()));
        }
        let suite = self.suite;
        let keys = self.direction_mut(dir);
        if keys.seq == u64::MAX {
            return Err(CryptoError::SequenceExhausted);
        }
        let mut plaintext = Vec::with_capacity(1 + frame.payload.len());
        plaintext.push(frame.content_type as u8);
        plaintext.extend_from_slice(&frame.payload);
        let payload = match suite {
            Suite::Standard => {
                let aad = record_aad(keys.seq, plaintext.len() + TAG_LEN);
                let cipher = ChaCha20Poly1305::new(Key::from_slice(&keys.key));
                cipher
                    .encrypt(
                        Nonce::from_slice(&keys.nonce()),
                        Payload {
                            msg: &plaintext,
                            aad: &aad,
                        },
                    )
                    .expect("chacha20poly1305 encryption is infallible for in-range input")
            }
            Suite::Null => plaintext,
        };
        keys.seq += 1;
        Ok(RecordFrame::new(ContentType::ApplicationData, payload))
    }

    /// Reverses [`ChannelKeys::seal`] for a record received from `dir`.
    pub fn open(&mut self, dir: Direction, wire: &RecordFrame) -> Result<RecordFrame, CryptoError> {
        if wire.content_type != ContentType::ApplicationData
            || wire.version != ProtocolVersion::TLS12
        {
            return Err(CryptoError::AuthFailure);
        }
        let suite = self.suite;
        let keys = self.direction_mut(dir);
        if keys.seq == u64::MAX {
            return Err(CryptoError::SequenceExhausted);
        }
        let plaintext = match suite {
            Suite::Standard => {
                let aad = record_aad(keys.seq, wire.payload.len());
                let cipher = ChaCha20Poly1305::new(Key::from_slice(&keys.key));
                cipher
                    .decrypt(
                        Nonce::from_slice(&keys.nonce()),
                        Payload {
                            msg: &wire.payload,
                            aad: &aad,
                        },
                    )
                    .map_err(|_| CryptoError::AuthFailure)?
            }
            Suite::Null => wire.payload.clone(),
        };
        let (&inner_type, inner) = plaintext.split_first().ok_or(CryptoError::AuthFailure)?;
        let content_type = ContentType::try_from(inner_type).map_err(|_| CryptoError::AuthFailure)?;
        keys.seq += 1;
        Ok(RecordFrame::new(content_type, inner.to_vec()))
    }
}

fn record_aad(seq: u64, ciphertext_len: usize) -> [u8; 13] {
    let mut aad = [0u8; 13];
    aad[..8].copy_from_slice(&seq.to_be_bytes());
    aad[8] = ContentType::ApplicationData as u8;
    aad[9] = ProtocolVersion::TLS12.major;
    aad[10] = ProtocolVersion::TLS12.minor;
    aad[11..].copy_from_slice(&(ciphertext_len as u16).to_be_bytes());
    aad
}

/// Running log of handshake message bytes for one handshake phase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    bytes: Vec<u8>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, message: &[u8]) {
        self.bytes.extend_from_slice(message);
    }

    pub fn reset(&mut self) {
        self.bytes.clear();
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(&self.bytes).into()
    }
}

impl TryFrom<CipherSuiteId> for Suite {
    type Error = CryptoError;

    fn try_from(id: CipherSuiteId) -> Result<Suite, CryptoError> {
        match id {
            STANDARD_SUITE => Ok(Suite::Standard),
            NULL_SUITE => Ok(Suite::Null),
            other => Err(CryptoError::UnknownSuite(other)),
        }
    }
}

impl Suite {
    pub fn id(self) -> CipherSuiteId {
        match self {
            Suite::Standard => STANDARD_SUITE,
            Suite::Null => NULL_SUITE,
        }
    }

    /// Generates a key pair; deterministic when `seed` is given.
    pub fn keypair_generate(self, seed: Option<u64>) -> KeyPair {
        let mut private = [0u8; SECRET_LEN];
        match seed {
            Some(seed) => seeded_rng("keypair", seed).fill_bytes(&mut private),
            None => rand::rng().fill_bytes(&mut private),
        }
        KeyPair::from_private(self, private)
    }

    /// Key agreement between our pair and the peer's public value. The peer
    /// value may be a bare agreement key or a full public part.
    pub fn shared_secret(self, mine: &KeyPair, their_public: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if their_public.len() != HALF_PUBLIC_LEN && their_public.len() != 2 * HALF_PUBLIC_LEN {
            return Err(CryptoError::MalformedPublicValue);
        }
        match self {
            Suite::Standard => {
                let mut peer = [0u8; HALF_PUBLIC_LEN];
                peer.copy_from_slice(&their_public[..HALF_PUBLIC_LEN]);
                let secret = x25519_dalek::StaticSecret::from(agreement_seed(&mine.private_part));
                let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(peer));
                if !shared.was_contributory() {
                    return Err(CryptoError::MalformedPublicValue);
                }
                Ok(shared.as_bytes().to_vec())
            }
            Suite::Null => Ok(vec![0u8; SECRET_LEN]),
        }
    }

    pub fn derive_channel_keys(
        self,
        secret: &[u8],
        transcript_hash: &[u8],
        client_random: &[u8; RANDOM_LEN],
        server_random: &[u8; RANDOM_LEN],
    ) -> ChannelKeys {
        let (client_write, server_write) = match self {
            Suite::Standard => {
                let mut block = [0u8; 2 * (KEY_LEN + IV_LEN)];
                let mut info = b"veil key expansion".to_vec();
                info.extend_from_slice(transcript_hash);
                schedule(secret, client_random, server_random)
                    .expand(&info, &mut block)
                    .expect("hkdf output length is within bounds");
                let (c, s) = block.split_at(KEY_LEN + IV_LEN);
                (direction_keys(c), direction_keys(s))
            }
            Suite::Null => (
                DirectionKeys {
                    key: [0x11; KEY_LEN],
                    iv: [0; IV_LEN],
                    seq: 0,
                },
                DirectionKeys {
                    key: [0x22; KEY_LEN],
                    iv: [0; IV_LEN],
                    seq: 0,
                },
            ),
        };
        ChannelKeys {
            suite: self,
            client_write,
            server_write,
        }
    }

    /// Finished message contents binding `label` and the transcript hash to
    /// the agreed secret and both randoms.
    pub fn finished_verify_data(
        self,
        secret: &[u8],
        client_random: &[u8; RANDOM_LEN],
        server_random: &[u8; RANDOM_LEN],
        label: &[u8],
        transcript_hash: &[u8],
    ) -> [u8; VERIFY_DATA_LEN] {
        let mut finished_key = [0u8; 32];
        schedule(secret, client_random, server_random)
            .expand(b"veil finished", &mut finished_key)
            .expect("hkdf output length is within bounds");
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&finished_key)
            .expect("hmac accepts any key length");
        mac.update(label);
        mac.update(transcript_hash);
        let tag = mac.finalize().into_bytes();
        let mut out = [0u8; VERIFY_DATA_LEN];
        out.copy_from_slice(&tag[..VERIFY_DATA_LEN]);
        out
    }

    pub fn sign(self, keypair: &KeyPair, message: &[u8]) -> Vec<u8> {
        match self {
            Suite::Standard => SigningKey::from_bytes(&signing_seed(&keypair.private_part))
                .sign(message)
                .to_bytes()
                .to_vec(),
            Suite::Null => null_signature(&keypair.public_part, message).to_vec(),
        }
    }

    /// Never panics; malformed keys or signatures simply fail verification.
    pub fn verify(self, public_part: &[u8], message: &[u8], signature: &[u8]) -> bool {
        if public_part.len() != 2 * HALF_PUBLIC_LEN {
            return false;
        }
        match self {
            Suite::Standard => {
                let Ok(key_bytes) = <[u8; 32]>::try_from(&public_part[HALF_PUBLIC_LEN..]) else {
                    return false;
                };
                let Ok(sig_bytes) = <[u8; 64]>::try_from(signature) else {
                    return false;
                };
                let Ok(key) = VerifyingKey::from_bytes(&key_bytes) else {
                    return false;
                };
                key.verify_strict(message, &ed25519_dalek::Signature::from_bytes(&sig_bytes))
                    .is_ok()
            }
            Suite::Null => signature == null_signature(public_part, message),
        }
    }
}

fn null_signature(public_part: &[u8], message: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"veil null signature");
    h.update(public_part);
    h.update(message);
    h.finalize().into()
}

fn schedule(secret: &[u8], client_random: &[u8], server_random: &[u8]) -> Hkdf<Sha256> {
    let salt = [client_random, server_random].concat();
    Hkdf::<Sha256>::new(Some(&salt), secret)
}

fn direction_keys(block: &[u8]) -> DirectionKeys {
    let mut key = [0u8; KEY_LEN];
    let mut iv = [0u8; IV_LEN];
    key.copy_from_slice(&block[..KEY_LEN]);
    iv.copy_from_slice(&block[KEY_LEN..KEY_LEN + IV_LEN]);
    DirectionKeys { key, iv, seq: 0 }
}

/// Registry lookup followed by key generation.
pub fn keypair_generate(suite: CipherSuiteId, seed: Option<u64>) -> Result<KeyPair, CryptoError> {
    Ok(Suite::try_from(suite)?.keypair_generate(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn keys(suite: Suite, secret: &[u8]) -> ChannelKeys {
        suite.derive_channel_keys(secret, &[5; 32], &[1; 32], &[2; 32])
    }

    #[test]
    fn keypair_determinism() {
        let a = keypair_generate(STANDARD_SUITE, Some(7)).unwrap();
        let b = keypair_generate(STANDARD_SUITE, Some(7)).unwrap();
        assert_eq!(a, b);
        let publics: HashSet<Vec<u8>> = (0..100)
            .map(|s| Suite::Standard.keypair_generate(Some(s)).public_part().to_vec())
            .collect();
        assert_eq!(publics.len(), 100);
        assert_eq!(
            keypair_generate(CipherSuiteId(0x1234), None),
            Err(CryptoError::UnknownSuite(CipherSuiteId(0x1234)))
        );
    }

    #[test]
    fn public_part_derives_from_private() {
        let kp = Suite::Standard.keypair_generate(None);
        assert_eq!(KeyPair::from_private(Suite::Standard, *kp.private_part()), kp);
        assert_eq!(kp.public_part().len(), 64);
    }

    #[test]
    fn shared_secret_symmetry() {
        let a = Suite::Standard.keypair_generate(None);
        let b = Suite::Standard.keypair_generate(None);
        let ab = Suite::Standard.shared_secret(&a, b.agreement_public()).unwrap();
        let ba = Suite::Standard.shared_secret(&b, a.public_part()).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(
            Suite::Standard.shared_secret(&a, &b.public_part()[..31]),
            Err(CryptoError::MalformedPublicValue)
        );
        assert_eq!(
            Suite::Standard.shared_secret(&a, &[0u8; 32]),
            Err(CryptoError::MalformedPublicValue)
        );
        assert_eq!(
            Suite::Null.shared_secret(&a, b.public_part()).unwrap(),
            vec![0u8; 32]
        );
    }

    #[test]
    fn derive_is_deterministic_and_null_is_constant() {
        assert_eq!(keys(Suite::Standard, &[9; 32]), keys(Suite::Standard, &[9; 32]));
        assert!(keys(Suite::Null, &[9; 32]).same_material(&keys(Suite::Null, &[3; 32])));
        let k = keys(Suite::Null, &[0; 32]);
        assert_eq!((k.client_seq(), k.server_seq()), (0, 0));
    }

    #[test]
    fn single_bit_flips_never_collide() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        let base = keys(Suite::Standard, &secret);
        let mut seen = Vec::new();
        for _ in 0..1000 {
            let mut flipped = secret;
            let bit = (rng.next_u32() % 256) as usize;
            flipped[bit / 8] ^= 1 << (bit % 8);
            let k = keys(Suite::Standard, &flipped);
            assert!(!k.same_material(&base));
            seen.push(k);
        }
        // Distinct flips map to distinct keys; equal flips to equal keys.
        for (i, a) in seen.iter().enumerate() {
            for b in &seen[i + 1..] {
                if a.same_material(b) {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn seal_open_round_trip_advances_counters() {
        let mut tx = keys(Suite::Standard, &[1; 32]);
        let mut rx = tx.clone();
        let frame = RecordFrame::new(ContentType::Handshake, b"hello there".to_vec());
        let sealed = tx.seal(Direction::ClientToServer, &frame).unwrap();
        assert_eq!(sealed.content_type, ContentType::ApplicationData);
        assert_eq!(sealed.payload.len(), frame.payload.len() + SEAL_OVERHEAD);
        assert_eq!(rx.open(Direction::ClientToServer, &sealed).unwrap(), frame);
        assert_eq!(tx.client_seq(), 1);
        assert_eq!(rx.client_seq(), 1);
        assert_eq!(tx.server_seq(), 0);
    }

    #[test]
    fn tampering_and_wrong_direction_fail() {
        let mut tx = keys(Suite::Standard, &[1; 32]);
        let frame = RecordFrame::new(ContentType::Handshake, vec![0x42; 40]);
        let sealed = tx.seal(Direction::ClientToServer, &frame).unwrap();
        for i in 0..sealed.payload.len() {
            let mut bad = sealed.clone();
            bad.payload[i] ^= 0x01;
            let mut rx = keys(Suite::Standard, &[1; 32]);
            assert_eq!(
                rx.open(Direction::ClientToServer, &bad),
                Err(CryptoError::AuthFailure)
            );
        }
        let mut rx = keys(Suite::Standard, &[1; 32]);
        assert_eq!(
            rx.open(Direction::ServerToClient, &sealed),
            Err(CryptoError::AuthFailure)
        );
    }

    #[test]
    fn out_of_order_records_fail() {
        let mut tx = keys(Suite::Standard, &[1; 32]);
        let mut rx = tx.clone();
        let a = tx
            .seal(Direction::ServerToClient, &RecordFrame::new(ContentType::ApplicationData, vec![1]))
            .unwrap();
        let b = tx
            .seal(Direction::ServerToClient, &RecordFrame::new(ContentType::ApplicationData, vec![2]))
            .unwrap();
        assert_eq!(
            rx.open(Direction::ServerToClient, &b),
            Err(CryptoError::AuthFailure)
        );
        assert!(rx.open(Direction::ServerToClient, &a).is_ok());
    }

    #[test]
    fn sequence_exhaustion() {
        let mut k = keys(Suite::Standard, &[1; 32]);
        k.set_seq(Direction::ClientToServer, u64::MAX);
        let f = RecordFrame::new(ContentType::ApplicationData, vec![]);
        assert_eq!(
            k.seal(Direction::ClientToServer, &f),
            Err(CryptoError::SequenceExhausted)
        );
    }

    #[test]
    fn oversize_plaintext_rejected() {
        let mut k = keys(Suite::Standard, &[1; 32]);
        let f = RecordFrame::new(ContentType::ApplicationData, vec![0; MAX_SEALED_PLAINTEXT + 1]);
        assert!(matches!(
            k.seal(Direction::ClientToServer, &f),
            Err(CryptoError::PlaintextTooLarge(_))
        ));
        let f = RecordFrame::new(ContentType::ApplicationData, vec![0; MAX_SEALED_PLAINTEXT]);
        assert_eq!(
            k.seal(Direction::ClientToServer, &f).unwrap().payload.len(),
            MAX_RECORD_PAYLOAD
        );
    }

    #[test]
    fn sign_verify() {
        for suite in [Suite::Standard, Suite::Null] {
            let kp = suite.keypair_generate(Some(1));
            let other = suite.keypair_generate(Some(2));
            let sig = suite.sign(&kp, b"message");
            assert!(suite.verify(kp.public_part(), b"message", &sig));
            assert!(!suite.verify(kp.public_part(), b"massage", &sig));
            assert!(!suite.verify(other.public_part(), b"message", &sig));
            assert!(!suite.verify(kp.public_part(), b"message", &sig[..10]));
        }
        let kp = Suite::Standard.keypair_generate(Some(3));
        let sig = Suite::Standard.sign(&kp, b"m");
        for i in 0..sig.len() * 8 {
            let mut bad = sig.clone();
            bad[i / 8] ^= 1 << (i % 8);
            assert!(!Suite::Standard.verify(kp.public_part(), b"m", &bad));
        }
    }

    #[test]
    fn transcript_hash_tracks_content() {
        let mut t = Transcript::new();
        let empty = t.hash();
        t.append(b"abc");
        assert_ne!(t.hash(), empty);
        t.reset();
        assert!(t.is_empty());
        assert_eq!(t.hash(), empty);
    }
}
