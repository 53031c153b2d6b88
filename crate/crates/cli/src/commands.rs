use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use tracing::{info, warn};

use veil_core::cert::{generate_self_signed, CertFile, EntryRole};
use veil_core::middlebox::{
    capture_read, capture_write, observe_capture, parse_rate, parse_rate_map, simulate_transfer,
    Classification, FlowId, FlowState, LinkSim, ShaperConfig, TunnelStats,
};
use veil_core::overhead::{median, run_overhead_bench, BenchReport};
use veil_core::wire::HandshakeType;
use veil_core::{
    CertEntry, CertStore, ClientConfig, ClientMode, Direction, ServerConfig, SniValue,
};

use crate::session::{self, CaptureSink, RecordStream};
use crate::{BenchArgs, CertgenArgs, CliError, ConnectArgs, ServeArgs, ShapesimArgs};

const IDLE_TIMEOUT: Duration = Duration::from_secs(30);
const ACCEPT_POLL: Duration = Duration::from_millis(25);
const FRONT_NAME: &str = "front.example";

fn usage(context: impl std::fmt::Display) -> impl FnOnce(String) -> CliError {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

fn open_capture(path: &Path, append: bool) -> Result<CaptureSink, CliError> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| usage(path.display())(e.to_string()))?;
    Ok(CaptureSink::new(Box::new(file)))
}

fn pattern(len: usize) -> Vec<u8> {
    (0..len).map(|i| (i % 251) as u8).collect()
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let store = CertStore::load(&args.store).map_err(|e| usage(args.store.display())(e.to_string()))?;
    let default = store.default_entry().doc.subject_name.clone();
    let named: Vec<String> = store.named().map(|e| e.doc.subject_name.clone()).collect();
    let listener = TcpListener::bind(args.listen).map_err(|e| usage(args.listen)(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| CliError::Failure(e.to_string()))?;
    let capture = args.capture.as_deref().map(|p| open_capture(p, true)).transpose()?;
    let mut cfg = ServerConfig::new(Arc::new(store));
    cfg.legacy_only = args.legacy_only;

    let stop = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
        signal_hook::flag::register(sig, Arc::clone(&stop)).map_err(|e| CliError::Failure(e.to_string()))?;
    }
    listener.set_nonblocking(true).map_err(|e| CliError::Failure(e.to_string()))?;
    info!(%addr, default = %default, named = ?named, legacy_only = args.legacy_only, "ready");

    let mut workers: Vec<thread::JoinHandle<()>> = Vec::new();
    let mut next_conn = 0u32;
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let conn = next_conn;
                next_conn += 1;
                let cfg = cfg.clone();
                let capture = capture.clone();
                let flow = FlowId::new(u32::from(peer.port()), u32::from(addr.port()), conn);
                workers.push(thread::spawn(move || {
                    if let Err(e) = stream
                        .set_nonblocking(false)
                        .and_then(|_| stream.set_read_timeout(Some(IDLE_TIMEOUT)))
                    {
                        return warn!(conn, error = %e, "socket setup failed");
                    }
                    info!(conn, %peer, "connection opened");
                    let mut rs = RecordStream::new(stream, Direction::ServerToClient, flow, capture);
                    match session::serve_connection(&mut rs, cfg, conn) {
                        Ok(()) => info!(conn, "connection closed"),
                        Err(e) => warn!(conn, error = %e, "connection failed"),
                    }
                }));
                workers.retain(|w| !w.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => warn!(error = %e, "accept failed"),
        }
    }
    info!(open = workers.iter().filter(|w| !w.is_finished()).count(), "draining");
    for w in workers {
        let _ = w.join();
    }
    info!("stopped");
    Ok(())
}

pub fn connect(args: ConnectArgs) -> Result<(), CliError> {
    let stream = TcpStream::connect(&args.addr)
        .map_err(|e| CliError::Failure(format!("connect {}: {e}", args.addr)))?;
    let local = stream.local_addr().map(|a| a.port()).unwrap_or(0);
    let peer = stream.peer_addr().map(|a| a.port()).unwrap_or(0);
    let capture = args.capture.as_deref().map(|p| open_capture(p, false)).transpose()?;
    let mut cfg = ClientConfig::new(args.sni.clone(), args.mode);
    cfg.expect_front_name = args.expect_front_name;
    cfg.seed = args.seed;

    let flow = FlowId::new(u32::from(local), u32::from(peer), 0);
    let mut rs = RecordStream::new(stream, Direction::ClientToServer, flow, capture);
    let report = session::run_client(&mut rs, cfg, &pattern(args.payload))?;

    let mut out = io::stdout().lock();
    if let Some(alert) = report.fallback_alert {
        let _ = writeln!(out, "fallback: server sent {alert}, retried in legacy mode");
    }
    for (i, phase) in report.phases.iter().enumerate() {
        let _ = writeln!(
            out,
            "phase{} complete at {:.3} ms, certificate {}",
            i + 1,
            phase.elapsed.as_secs_f64() * 1e3,
            phase.certificate_subject
        );
    }
    let _ = writeln!(out, "established {}", report.established_sni.as_deref().unwrap_or("-"));
    let _ = writeln!(out, "echoed {} bytes in {:.3} ms", report.echoed, report.total.as_secs_f64() * 1e3);
    Ok(())
}

fn describe_flow(index: usize, flow: &FlowState) -> String {
    let verdict = match flow.classification() {
        Classification::Identified(name) => format!("IDENTIFIED {name}"),
        Classification::Unknown | Classification::Pending => format!(
            "UNKNOWN ({} plaintext ClientHello, {} SNI)",
            flow.plaintext_client_hellos, flow.sni_extensions
        ),
    };
    let types: Vec<String> = flow
        .plaintext_handshakes
        .iter()
        .map(|(dir, code)| {
            let name = HandshakeType::try_from(*code)
                .map(|t| t.name().to_owned())
                .unwrap_or_else(|_| format!("unknown({code:#04x})"));
            format!("{} {name}", dir.label())
        })
        .collect();
    format!(
        "flow {index}: {verdict}\n  id {}, {} records, plaintext handshake: {}",
        flow.id,
        flow.records_seen,
        if types.is_empty() { "none".to_owned() } else { types.join(", ") }
    )
}

pub fn sniff(path: &Path) -> Result<(), CliError> {
    let events = capture_read(path).map_err(|e| usage(path.display())(e.to_string()))?;
    let flows = observe_capture(&events);
    let mut out = io::stdout().lock();
    for (i, flow) in flows.values().enumerate() {
        let _ = writeln!(out, "{}", describe_flow(i, flow));
    }
    Ok(())
}

fn sim_issue_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

/// Deterministic two-certificate setup for simulated runs.
pub fn sim_configs(target: &SniValue, mode: ClientMode, seed: u64) -> (ClientConfig, ServerConfig) {
    let issued = sim_issue_time();
    let entry = |subject: &str, salt: u64| {
        let (doc, keypair) = generate_self_signed(subject, 365, Some(seed.wrapping_mul(31).wrapping_add(salt)), issued)
            .expect("fixed subjects are valid");
        CertEntry { doc, keypair }
    };
    let mut store = CertStore::new(entry(FRONT_NAME, 1));
    if target.as_str() != FRONT_NAME {
        store.insert(entry(target.as_str(), 2));
    }
    let mut client = ClientConfig::new(target.clone(), mode);
    client.seed = Some(seed);
    client.now = Some(issued + chrono::Duration::days(1));
    let mut server = ServerConfig::new(Arc::new(store));
    server.seed = Some(seed.wrapping_add(1));
    (client, server)
}

pub fn shapesim(args: ShapesimArgs) -> Result<(), CliError> {
    let capacity = parse_rate(&args.capacity).map_err(|e| usage("--capacity")(e.to_string()))?;
    let default_rate = parse_rate(&args.default_rate).map_err(|e| usage("--default-rate")(e.to_string()))?;
    let mut shaper = ShaperConfig::new(default_rate);
    if let Some(path) = &args.rate_map {
        let text = fs::read_to_string(path).map_err(|e| usage(path.display())(e.to_string()))?;
        shaper.class_rates = parse_rate_map(&text).map_err(|e| usage(path.display())(e.to_string()))?;
    }
    if let Some(depth) = args.bucket_depth {
        shaper.bucket_depth = depth;
    }
    shaper.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let (client, server) = sim_configs(&args.sni, args.mode, args.seed);
    let report = simulate_transfer(client, server, &shaper, &LinkSim::new(capacity, args.delay_ms), args.payload);

    let sink: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(File::create(path).map_err(|e| usage(path.display())(e.to_string()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut csv = csv::Writer::from_writer(sink);
    let write_err = |e: csv::Error| CliError::Failure(format!("writing CSV: {e}"));
    csv.write_record(["t_seconds", "throughput_bps"]).map_err(write_err)?;
    for (t, bps) in &report.timeline {
        csv.write_record([t.to_string(), format!("{bps:.0}")]).map_err(write_err)?;
    }
    csv.flush().map_err(|e| CliError::Failure(e.to_string()))?;
    if let Some(path) = &args.capture {
        capture_write(&report.capture, path).map_err(|e| CliError::Failure(e.to_string()))?;
    }
    info!(
        classification = ?report.classification(),
        steady_state_bps = report.steady_state_bps(),
        handshakes = report.handshake_complete_us.len(),
        transfer_done_us = report.transfer_done_us,
        "simulation finished"
    );
    match report.error {
        Some(e) => Err(CliError::Failure(format!("simulated handshake failed: {e}"))),
        None => Ok(()),
    }
}

fn wallclock_bench(args: &BenchArgs) -> Result<BenchReport, CliError> {
    let target = SniValue::new("video.example").expect("valid name");
    let (client, server) = sim_configs(&target, ClientMode::Masked, args.seed);
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| CliError::Failure(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| CliError::Failure(e.to_string()))?;
    let runs = 2 * args.repeats.max(1);
    let server_thread = thread::spawn(move || {
        for conn in 0..runs {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut rs = RecordStream::new(stream, Direction::ServerToClient, FlowId::default(), None);
            if let Err(e) = session::serve_connection(&mut rs, server.clone(), conn) {
                warn!(conn, error = %e, "bench connection failed");
            }
        }
    });
    let payload = pattern(args.payload as usize);
    let mut times = [Vec::new(), Vec::new()];
    for i in 0..args.repeats.max(1) {
        for (k, mode) in [ClientMode::Legacy, ClientMode::Masked].into_iter().enumerate() {
            let mut cfg = client.clone();
            cfg.mode = mode;
            cfg.seed = Some(args.seed.wrapping_add(u64::from(i)));
            let stream = TcpStream::connect(addr).map_err(|e| CliError::Failure(e.to_string()))?;
            let mut rs = RecordStream::new(stream, Direction::ClientToServer, FlowId::default(), None);
            let report = session::run_client(&mut rs, cfg, &payload)?;
            times[k].push(report.total.as_secs_f64());
        }
    }
    let _ = server_thread.join();
    let [mut legacy, mut masked] = times;
    Ok(BenchReport::new(
        args.payload,
        args.repeats.max(1),
        median(&mut legacy),
        median(&mut masked),
        TunnelStats::default(),
    ))
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let report = if args.wallclock {
        wallclock_bench(&args)?
    } else {
        let capacity = parse_rate(&args.capacity).map_err(|e| usage("--capacity")(e.to_string()))?;
        let target = SniValue::new("video.example").expect("valid name");
        let (client, server) = sim_configs(&target, ClientMode::Masked, args.seed);
        let link = LinkSim::new(capacity, args.delay_ms);
        run_overhead_bench(&client, &server, &link, args.payload, args.repeats)
            .map_err(|e| CliError::Failure(format!("bench handshake failed: {e}")))?
    };
    let mut out = io::stdout().lock();
    if args.json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    let _ = writeln!(out, "payload_bytes {} ({} megabits)", report.payload_bytes, report.payload_bytes as f64 * 8.0 / 1e6);
    let _ = writeln!(out, "repeats {}", report.repeats);
    if !args.wallclock {
        let _ = writeln!(out, "link {} bps, {} ms one-way", report.capacity_bps, report.propagation_ms);
    }
    let _ = writeln!(out, "legacy_seconds {:.6}", report.legacy_seconds);
    let _ = writeln!(out, "masked_seconds {:.6}", report.masked_seconds);
    let _ = writeln!(out, "extra_handshake_fraction {:.6}", report.extra_handshake_fraction);
    if !args.wallclock {
        let _ = writeln!(out, "tunnel_flights {}", report.tunnel_flights);
        let _ = writeln!(out, "tunnel_bytes {}", report.tunnel_bytes);
        let _ = writeln!(out, "tunnel_byte_fraction {:.8}", report.tunnel_byte_fraction());
        let _ = writeln!(out, "predicted_extra_seconds {:.6}", report.predicted_extra_seconds());
    }
    Ok(())
}

pub fn certgen(args: CertgenArgs) -> Result<(), CliError> {
    let mut file = if args.out.exists() {
        CertFile::read(&args.out).map_err(|e| usage(args.out.display())(e.to_string()))?
    } else {
        CertFile::default()
    };
    let (doc, keypair) = generate_self_signed(&args.subject, args.days, args.seed, Utc::now())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let subject = doc.subject_name.clone();
    let entry = CertEntry { doc, keypair };

    let current_default = file
        .entries
        .iter()
        .find(|(r, _)| *r == EntryRole::Default)
        .map(|(_, e)| e.doc.subject_name.clone());
    let existing = file.entries.iter().position(|(_, e)| e.doc.subject_name == subject);
    let role = match (&current_default, args.default) {
        (Some(d), _) if *d == subject => EntryRole::Default,
        (None, true) => EntryRole::Default,
        (Some(d), true) => {
            warn!(subject = %subject, default = %d, "store already has a default; adding as named");
            EntryRole::Named
        }
        (_, false) => EntryRole::Named,
    };
    if let Some(i) = existing {
        warn!(subject = %subject, "replacing existing entry");
        file.entries.remove(i);
    }
    match role {
        EntryRole::Default => file.entries.insert(0, (role, entry)),
        EntryRole::Named => file.entries.push((role, entry)),
    }
    file.write(&args.out).map_err(|e| CliError::Failure(e.to_string()))?;
    let role = if role == EntryRole::Default { "default" } else { "named" };
    println!("wrote {role} certificate for {subject} to {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_configs_are_deterministic() {
        let target = SniValue::new("video.example").unwrap();
        let (a, s1) = sim_configs(&target, ClientMode::Masked, 9);
        let (b, s2) = sim_configs(&target, ClientMode::Masked, 9);
        assert_eq!(a.seed, b.seed);
        assert_eq!(s1.store, s2.store);
        assert_eq!(s1.store.named().count(), 1);
        let (_, front_only) = sim_configs(&SniValue::new(FRONT_NAME).unwrap(), ClientMode::Legacy, 9);
        assert_eq!(front_only.store.named().count(), 0);
    }

    #[test]
    fn flow_description_lines() {
        let flow = FlowState::new(FlowId::new(0, 1, 0));
        assert_eq!(
            describe_flow(0, &flow),
            "flow 0: UNKNOWN (0 plaintext ClientHello, 0 SNI)\n  id 0:1:0, 0 records, plaintext handshake: none"
        );
    }
}
