//! Drives the handshake state machines over blocking byte streams.

use std::io::{self, BufWriter, Read, Write};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{info, warn};

use veil_core::handshake::{AlertMessage, HandshakePhase};
use veil_core::middlebox::{CaptureEvent, FlowId};
use veil_core::wire::{encode_record, RecordReader};
use veil_core::{ClientConfig, ClientConnection, Direction, HandshakeError, RecordFrame, ServerConfig, ServerConnection};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Handshake(#[from] HandshakeError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("peer closed the connection mid-handshake")]
    Eof,
    #[error("echo mismatch: sent {sent} bytes, got {got} back")]
    EchoMismatch { sent: usize, got: usize },
}

type SharedWriter = Arc<Mutex<(BufWriter<Box<dyn Write + Send>>, Instant)>>;

/// Append-only capture file shared by every connection.
#[derive(Clone)]
pub struct CaptureSink {
    inner: SharedWriter,
}

impl CaptureSink {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        CaptureSink { inner: Arc::new(Mutex::new((BufWriter::new(out), Instant::now()))) }
    }

    pub fn record(&self, flow: FlowId, dir: Direction, raw: &[u8]) {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let t = guard.1.elapsed().as_micros() as u64;
        let line = CaptureEvent::new(t, flow, dir, raw.to_vec()).to_line();
        if let Err(e) = writeln!(guard.0, "{line}").and_then(|_| guard.0.flush()) {
            warn!(error = %e, "capture write failed");
        }
    }
}

/// One end of a record stream with optional capture of both directions.
pub struct RecordStream<S> {
    stream: S,
    reader: RecordReader,
    outbound: Direction,
    flow: FlowId,
    capture: Option<CaptureSink>,
}

impl<S: Read + Write> RecordStream<S> {
    pub fn new(stream: S, outbound: Direction, flow: FlowId, capture: Option<CaptureSink>) -> Self {
        RecordStream { stream, reader: RecordReader::new(), outbound, flow, capture }
    }

    pub fn send(&mut self, frames: Vec<RecordFrame>) -> io::Result<()> {
        if frames.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for frame in &frames {
            let bytes = encode_record(frame).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
            if let Some(sink) = &self.capture {
                sink.record(self.flow, self.outbound, &bytes);
            }
            buf.extend(bytes);
        }
        self.stream.write_all(&buf)?;
        self.stream.flush()
    }

    /// Next complete record, or `None` at end of stream.
    pub fn recv(&mut self) -> Result<Option<RecordFrame>, SessionError> {
        let mut chunk = [0u8; 16 * 1024];
        loop {
            if let Some(frame) = self.reader.next_frame().map_err(HandshakeError::from)? {
                if let Some(sink) = &self.capture {
                    sink.record(self.flow, self.outbound.reverse(), &encode_record(&frame).expect("decoded record re-encodes"));
                }
                return Ok(Some(frame));
            }
            let n = self.stream.read(&mut chunk)?;
            if n == 0 {
                return Ok(None);
            }
            self.reader.push(&chunk[..n]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseReport {
    pub elapsed: Duration,
    pub certificate_subject: String,
}

#[derive(Debug, Clone)]
pub struct ConnectReport {
    pub phases: Vec<PhaseReport>,
    pub established_sni: Option<String>,
    pub fallback_alert: Option<AlertMessage>,
    pub echoed: usize,
    pub total: Duration,
}

/// Runs every handshake the client's mode calls for, echoes `payload` and
/// closes.
pub fn run_client<S: Read + Write>(
    stream: &mut RecordStream<S>,
    cfg: ClientConfig,
    payload: &[u8],
) -> Result<ConnectReport, SessionError> {
    let started = Instant::now();
    let mut client = ClientConnection::new(cfg);
    let mut report = ConnectReport {
        phases: Vec::new(),
        established_sni: None,
        fallback_alert: None,
        echoed: 0,
        total: Duration::ZERO,
    };
    let hello = client.start()?;
    stream.send(hello)?;
    while !client.is_established() {
        let frame = stream.recv()?.ok_or(SessionError::Eof)?;
        let done = client.handshakes_completed();
        match client.step(Some(&frame)) {
            Ok(out) => stream.send(out)?,
            Err(e) => {
                if let Some(alert) = client.take_alert() {
                    let _ = stream.send(vec![alert]);
                }
                return Err(e.into());
            }
        }
        if client.fell_back() && report.fallback_alert.is_none() {
            report.fallback_alert = Some(AlertMessage::warning(veil_core::handshake::alert_code::MASKED_HANDSHAKE_UNSUPPORTED));
        }
        if client.handshakes_completed() > done {
            let subject = client.state().certificate.as_ref().map(|c| c.subject_name.clone()).unwrap_or_default();
            report.phases.push(PhaseReport { elapsed: started.elapsed(), certificate_subject: subject });
        }
    }
    report.established_sni = client.state().established_sni.as_ref().map(|s| s.to_string());

    if !payload.is_empty() {
        stream.send(client.send_app_data(payload)?)?;
        let mut echo = Vec::with_capacity(payload.len());
        while echo.len() < payload.len() {
            let Some(frame) = stream.recv()? else { break };
            client.step(Some(&frame))?;
            echo.extend(client.take_app_data());
        }
        if echo != payload {
            return Err(SessionError::EchoMismatch { sent: payload.len(), got: echo.len() });
        }
        report.echoed = echo.len();
    }
    stream.send(client.close()?)?;
    report.total = started.elapsed();
    Ok(report)
}

/// Serves one connection: handshakes, then echoes application data until the
/// peer closes.
pub fn serve_connection<S: Read + Write>(
    stream: &mut RecordStream<S>,
    cfg: ServerConfig,
    conn: u32,
) -> Result<(), SessionError> {
    let mut server = ServerConnection::new(cfg);
    let mut phase = HandshakePhase::Plain;
    let mut fallback_logged = false;
    while let Some(frame) = stream.recv()? {
        match server.step(Some(&frame)) {
            Ok(out) => stream.send(out)?,
            Err(e) => {
                if let Some(alert) = server.take_alert() {
                    let _ = stream.send(vec![alert]);
                }
                return Err(e.into());
            }
        }
        if server.fallback_sent() && !fallback_logged {
            fallback_logged = true;
            info!(conn, "legacy fallback requested");
        }
        let now = server.state().phase;
        if now != phase {
            phase = now;
            let subject = server.state().certificate.as_ref().map(|c| c.subject_name.as_str()).unwrap_or("");
            let sni = server.state().established_sni.as_ref().map(|s| s.to_string());
            let phase_name = match now {
                HandshakePhase::FirstComplete => "first",
                _ => "second",
            };
            info!(conn, phase = phase_name, subject, sni = sni.as_deref(), "handshake phase complete");
        }
        let data = server.take_app_data();
        if !data.is_empty() {
            stream.send(server.send_app_data(&data)?)?;
        }
        if server.peer_closed() {
            // The peer may already be gone; its close_notify was the last word.
            let _ = stream.send(server.close()?);
            break;
        }
    }
    Ok(())
}
