//! Simplified self-signed certificates and the fronting server's store.
//!
//! Store files are line-oriented text, one block per certificate, blocks
//! separated by blank lines. The first block must be the default entry:
//!
//! ```text
//! entry: default
//! subject: front.example
//! not_before: 2026-01-01T00:00:00Z
//! not_after: 2026-01-31T00:00:00Z
//! serial: 1234
//! public: <hex>
//! signature: <hex>
//! private: <hex>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use rand::RngCore;
use thiserror::Error;
use tracing::warn;

use crate::suite::{seeded_rng, KeyPair, Suite};
use crate::wire::SniValue;

/// Certificates are always signed and keyed with the standard suite.
const CERT_SUITE: Suite = Suite::Standard;

#[derive(Debug, Error)]
pub enum CertError {
    #[error("invalid certificate subject {0:?}")]
    InvalidSubject(String),
    #[error("validity must be at least one day")]
    InvalidValidity,
    #[error("no certificate for {0}")]
    NotFound(String),
    #[error("certificate store has no default certificate")]
    MissingDefaultCertificate,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed certificate encoding: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> CertError {
    CertError::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateDoc {
    pub subject_name: String,
    pub public_part: Vec<u8>,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    pub serial: u64,
    pub signature: Vec<u8>,
}

impl CertificateDoc {
    /// The bytes the signature covers.
    pub fn to_be_signed(&self) -> Vec<u8> {
        let subject = self.subject_name.as_bytes();
        let mut out = Vec::with_capacity(64 + subject.len() + self.public_part.len());
        out.extend_from_slice(&(subject.len() as u16).to_be_bytes());
        out.extend_from_slice(subject);
        out.extend_from_slice(&self.not_before.timestamp().to_be_bytes());
        out.extend_from_slice(&self.not_after.timestamp().to_be_bytes());
        out.extend_from_slice(&self.serial.to_be_bytes());
        out.extend_from_slice(&(self.public_part.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.public_part);
        out
    }

    /// Binary form carried in the Certificate handshake message.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.to_be_signed();
        out.extend_from_slice(&(self.signature.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CertificateDoc, CertError> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &'static str| -> Result<&[u8], CertError> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or(CertError::Malformed(what))?;
            pos += n;
            Ok(s)
        };
        let be16 = |b: &[u8]| u16::from_be_bytes([b[0], b[1]]) as usize;
        let n = be16(take(2, "subject length")?);
        let subject_name = std::str::from_utf8(take(n, "subject")?)
            .map_err(|_| CertError::Malformed("subject encoding"))?
            .to_owned();
        let not_before = timestamp(take(8, "not_before")?)?;
        let not_after = timestamp(take(8, "not_after")?)?;
        let serial = u64::from_be_bytes(take(8, "serial")?.try_into().expect("8 bytes"));
        let n = be16(take(2, "public length")?);
        let public_part = take(n, "public")?.to_vec();
        let n = be16(take(2, "signature length")?);
        let signature = take(n, "signature")?.to_vec();
        if pos != bytes.len() {
            return Err(CertError::Malformed("trailing bytes"));
        }
        Ok(CertificateDoc {
            subject_name,
            public_part,
            not_before,
            not_after,
            serial,
            signature,
        })
    }
}

fn timestamp(b: &[u8]) -> Result<DateTime<Utc>, CertError> {
    let secs = i64::from_be_bytes(b.try_into().expect("8 bytes"));
    Utc.timestamp_opt(secs, 0)
        .single()
        .ok_or(CertError::Malformed("timestamp out of range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Valid,
    NameMismatch,
    /// Outside the validity window on either side.
    Expired,
    BadSignature,
}

/// Creates a certificate for `subject` signed by its own fresh key.
///
/// With a seed, both the key and the serial are reproducible; `issued_at` is
/// truncated to whole seconds and becomes `not_before`.
pub fn generate_self_signed(
    subject: &str,
    validity_days: u32,
    seed: Option<u64>,
    issued_at: DateTime<Utc>,
) -> Result<(CertificateDoc, KeyPair), CertError> {
    let subject =
        SniValue::new(subject).map_err(|_| CertError::InvalidSubject(subject.to_owned()))?;
    if validity_days == 0 {
        return Err(CertError::InvalidValidity);
    }
    let keypair = CERT_SUITE.keypair_generate(seed);
    let serial = match seed {
        Some(s) => seeded_rng("serial", s).next_u64(),
        None => rand::rng().next_u64(),
    };
    let not_before = Utc
        .timestamp_opt(issued_at.timestamp(), 0)
        .single()
        .expect("whole-second timestamp is representable");
    let mut doc = CertificateDoc {
        subject_name: subject.as_str().to_owned(),
        public_part: keypair.public_part().to_vec(),
        not_before,
        not_after: not_before + Duration::days(i64::from(validity_days)),
        serial,
        signature: Vec::new(),
    };
    doc.signature = CERT_SUITE.sign(&keypair, &doc.to_be_signed());
    Ok((doc, keypair))
}

/// Checks signature, then validity window, then subject; first failure wins.
pub fn validate_certificate(
    doc: &CertificateDoc,
    expected_name: Option<&str>,
    now: DateTime<Utc>,
) -> Validity {
    if !CERT_SUITE.verify(&doc.public_part, &doc.to_be_signed(), &doc.signature) {
        return Validity::BadSignature;
    }
    if doc.not_before >= doc.not_after || now < doc.not_before || now > doc.not_after {
        return Validity::Expired;
    }
    match expected_name {
        Some(name) if name != doc.subject_name => Validity::NameMismatch,
        _ => Validity::Valid,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertEntry {
    pub doc: CertificateDoc,
    pub keypair: KeyPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryRole {
    Default,
    Named,
}

/// Raw contents of a store file, in file order, before store invariants are
/// enforced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CertFile {
    pub entries: Vec<(EntryRole, CertEntry)>,
}

impl CertFile {
    pub fn parse(text: &str) -> Result<CertFile, CertError> {
        let mut entries = Vec::new();
        let mut block: Vec<(usize, &str, &str)> = Vec::new();
        let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        for (lineno, line) in lines.chain(std::iter::once((0, ""))) {
            if line.is_empty() {
                if !block.is_empty() {
                    entries.push(parse_block(&block)?);
                    block.clear();
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, "expected `key: value`"))?;
            block.push((lineno, key.trim(), value.trim()));
        }
        Ok(CertFile { entries })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (role, entry)) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let doc = &entry.doc;
            let role = match role {
                EntryRole::Default => "default",
                EntryRole::Named => "named",
            };
            let _ = writeln!(out, "entry: {role}");
            let _ = writeln!(out, "subject: {}", doc.subject_name);
            let _ = writeln!(out, "not_before: {}", rfc3339(doc.not_before));
            let _ = writeln!(out, "not_after: {}", rfc3339(doc.not_after));
            let _ = writeln!(out, "serial: {}", doc.serial);
            let _ = writeln!(out, "public: {}", hex::encode(&doc.public_part));
            let _ = writeln!(out, "signature: {}", hex::encode(&doc.signature));
            let _ = writeln!(out, "private: {}", hex::encode(entry.keypair.private_part()));
        }
        out
    }

    pub fn read(path: &Path) -> Result<CertFile, CertError> {
        CertFile::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), CertError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_block(fields: &[(usize, &str, &str)]) -> Result<(EntryRole, CertEntry), CertError> {
    let first_line = fields[0].0;
    let get = |key: &str| -> Result<(usize, &str), CertError> {
        let mut hits = fields.iter().filter(|(_, k, _)| *k == key);
        let (line, _, value) = hits
            .next()
            .ok_or_else(|| parse_err(first_line, format!("missing field `{key}`")))?;
        if let Some((dup, _, _)) = hits.next() {
            return Err(parse_err(*dup, format!("duplicate field `{key}`")));
        }
        Ok((*line, value))
    };
    if let Some((line, key, _)) = fields.iter().find(|(_, k, _)| {
        ![
            "entry",
            "subject",
            "not_before",
            "not_after",
            "serial",
            "public",
            "signature",
            "private",
        ]
        .contains(k)
    }) {
        return Err(parse_err(*line, format!("unknown field `{key}`")));
    }
    let role = match get("entry")? {
        (_, "default") => EntryRole::Default,
        (_, "named") => EntryRole::Named,
        (line, other) => return Err(parse_err(line, format!("unknown entry role `{other}`"))),
    };
    let time = |key: &str| -> Result<DateTime<Utc>, CertError> {
        let (line, v) = get(key)?;
        DateTime::parse_from_rfc3339(v)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| parse_err(line, format!("{key}: {e}")))
    };
    let hex_field = |key: &str| -> Result<Vec<u8>, CertError> {
        let (line, v) = get(key)?;
        hex::decode(v).map_err(|e| parse_err(line, format!("{key}: {e}")))
    };
    let (serial_line, serial) = get("serial")?;
    let doc = CertificateDoc {
        subject_name: get("subject")?.1.to_owned(),
        not_before: time("not_before")?,
        not_after: time("not_after")?,
        serial: serial
            .parse()
            .map_err(|e| parse_err(serial_line, format!("serial: {e}")))?,
        public_part: hex_field("public")?,
        signature: hex_field("signature")?,
    };
    let (private_line, _) = get("private")?;
    let private: [u8; 32] = hex_field("private")?
        .try_into()
        .map_err(|_| parse_err(private_line, "private key must be 32 bytes"))?;
    let keypair = KeyPair::from_private(CERT_SUITE, private);
    if keypair.public_part() != doc.public_part {
        return Err(parse_err(private_line, "private key does not match public part"));
    }
    Ok((role, CertEntry { doc, keypair }))
}

/// Default certificate plus exact-match named certificates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertStore {
    default: CertEntry,
    named: BTreeMap<String, CertEntry>,
}

impl CertStore {
    pub fn new(default: CertEntry) -> Self {
        CertStore {
            default,
            named: BTreeMap::new(),
        }
    }

    /// Adds or replaces a named entry, keyed by its certificate subject.
    pub fn insert(&mut self, entry: CertEntry) -> Option<CertEntry> {
        if entry.keypair.public_part() == self.default.keypair.public_part() {
            warn!(subject = %entry.doc.subject_name, "named certificate reuses the default key");
        }
        self.named.insert(entry.doc.subject_name.clone(), entry)
    }

    /// Files an entry under a name other than its subject, as a
    /// misconfigured or malicious server might.
    #[cfg(test)]
    pub(crate) fn insert_under(&mut self, name: &str, entry: CertEntry) {
        self.named.insert(name.to_owned(), entry);
    }

    pub fn default_entry(&self) -> &CertEntry {
        &self.default
    }

    pub fn named(&self) -> impl Iterator<Item = &CertEntry> {
        self.named.values()
    }

    /// Absent name yields the default entry; a present name must match a
    /// subject exactly. The default's own subject counts as a match.
    pub fn lookup(&self, name: Option<&SniValue>) -> Result<&CertEntry, CertError> {
        let Some(name) = name else {
            return Ok(&self.default);
        };
        if let Some(entry) = self.named.get(name.as_str()) {
            return Ok(entry);
        }
        if self.default.doc.subject_name == name.as_str() {
            return Ok(&self.default);
        }
        Err(CertError::NotFound(name.to_string()))
    }

    pub fn from_file(file: CertFile) -> Result<CertStore, CertError> {
        let mut entries = file.entries.into_iter();
        let Some((role, default)) = entries.next() else {
            return Err(CertError::MissingDefaultCertificate);
        };
        if role != EntryRole::Default {
            if entries.any(|(r, _)| r == EntryRole::Default) {
                return Err(parse_err(0, "default entry must be the first block"));
            }
            return Err(CertError::MissingDefaultCertificate);
        }
        let mut store = CertStore::new(default);
        for (role, entry) in entries {
            if role == EntryRole::Default {
                return Err(parse_err(0, "more than one default entry"));
            }
            let subject = entry.doc.subject_name.clone();
            if store.insert(entry).is_some() {
                return Err(parse_err(0, format!("duplicate subject `{subject}`")));
            }
        }
        Ok(store)
    }

    pub fn to_file(&self) -> CertFile {
        let mut entries = vec![(EntryRole::Default, self.default.clone())];
        entries.extend(self.named.values().cloned().map(|e| (EntryRole::Named, e)));
        CertFile { entries }
    }

    pub fn load(path: &Path) -> Result<CertStore, CertError> {
        CertStore::from_file(CertFile::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CertError> {
        self.to_file().write(path)
    }
}
