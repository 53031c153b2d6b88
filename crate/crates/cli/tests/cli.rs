mod common;

use std::fs;
use std::process::Command;
use std::time::Duration;

use common::{make_store, run, stderr, stdout, Server};
use veil_core::cert::CertFile;
use veil_core::middlebox::capture_read;
use veil_core::CertStore;

#[test]
fn certgen_builds_a_loadable_store_and_replaces_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let path = make_store(dir.path(), &["video.example"]);
    let store = CertStore::load(&path).unwrap();
    assert_eq!(store.default_entry().doc.subject_name, "front.example");
    let before = store.named().next().unwrap().doc.clone();

    let out = run(&["certgen", "--subject", "video.example", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stderr(&out).contains("replacing existing entry"));
    let file = CertFile::read(&path).unwrap();
    assert_eq!(file.entries.len(), 2);
    let after = CertStore::load(&path).unwrap();
    assert_ne!(after.named().next().unwrap().doc, before);

    // A second --default does not displace the first.
    let out = run(&["certgen", "--subject", "other.example", "--default", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let store = CertStore::load(&path).unwrap();
    assert_eq!(store.default_entry().doc.subject_name, "front.example");
    assert_eq!(store.named().count(), 2);
}

#[test]
fn certgen_rejects_bad_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.txt");
    for subject in ["", "192.168.0.1"] {
        let res = run(&["certgen", "--subject", subject, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(2), "{subject:?}");
    }
    assert!(!out.exists());
}

#[test]
fn serve_refuses_a_store_without_default() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("named.txt");
    let out = run(&["certgen", "--subject", "video.example", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let res = run(&["serve", "--listen", "127.0.0.1:0", "--store", path.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("default"), "{}", stderr(&res));
}

#[test]
fn masked_connect_completes_both_phases_and_never_leaks_the_name() {
    let dir = tempfile::tempdir().unwrap();
    let store = make_store(dir.path(), &["video.example"]);
    let server_cap = dir.path().join("server.cap");
    let server = Server::start(&store, &["--capture", server_cap.to_str().unwrap()]);
    let client_cap = dir.path().join("client.cap");
    let out = run(&[
        "connect",
        &server.addr,
        "--sni",
        "video.example",
        "--expect-front-name",
        "front.example",
        "--payload",
        "50000",
        "--capture",
        client_cap.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    assert!(report.contains("phase1 complete") && report.contains("certificate front.example"), "{report}");
    assert!(report.contains("phase2 complete") && report.contains("certificate video.example"), "{report}");
    assert!(report.contains("established video.example"));
    assert!(report.contains("echoed 50000 bytes"));

    let second = server
        .wait_for(|v| v["fields"]["phase"] == "second")
        .expect("server logged the second phase");
    assert_eq!(second["fields"]["subject"], "video.example");

    for cap in [&client_cap, &server_cap] {
        // Let the server flush the close exchange.
        std::thread::sleep(Duration::from_millis(100));
        let events = capture_read(cap).unwrap();
        assert!(!events.is_empty());
        let hellos = events
            .iter()
            .filter(|e| e.summary.handshake_type.as_deref() == Some("client_hello"))
            .count();
        assert_eq!(hellos, 1);
        assert!(events.iter().all(|e| e.summary.sni.is_none()));
        for dir in [veil_core::Direction::ClientToServer, veil_core::Direction::ServerToClient] {
            let stream: Vec<u8> = events
                .iter()
                .filter(|e| e.direction == dir)
                .flat_map(|e| e.raw.clone())
                .collect();
            assert!(!stream.windows(13).any(|w| w == b"video.example"));
        }
        let sniffed = run(&["sniff", cap.to_str().unwrap()]);
        assert!(stdout(&sniffed).starts_with("flow 0: UNKNOWN (1 plaintext ClientHello, 0 SNI)"));
    }
}

#[test]
fn legacy_only_server_makes_masked_clients_fall_back() {
    let dir = tempfile::tempdir().unwrap();
    let store = make_store(dir.path(), &["video.example"]);
    let server = Server::start(&store, &["--legacy-only"]);
    let out = run(&["connect", &server.addr, "--sni", "video.example"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    assert!(report.starts_with("fallback: server sent warning"), "{report}");
    assert!(report.contains("(0x70)"));
    assert!(report.contains("phase1 complete") && !report.contains("phase2"));
    assert!(report.contains("certificate video.example"));
}

#[test]
fn connect_failures_exit_nonzero_with_the_reason() {
    let dir = tempfile::tempdir().unwrap();
    let store = make_store(dir.path(), &["video.example"]);
    let server = Server::start(&store, &[]);

    let mismatch = run(&["connect", &server.addr, "--sni", "video.example", "--expect-front-name", "cdn.example"]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(stderr(&mismatch).contains("NameMismatch"), "{}", stderr(&mismatch));

    let unknown = run(&["connect", &server.addr, "--sni", "absent.example"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(stderr(&unknown).contains("unrecognized_name"));

    let literal = run(&["connect", &server.addr, "--sni", "10.0.0.1"]);
    assert_eq!(literal.status.code(), Some(2));

    let refused = run(&["connect", "127.0.0.1:1", "--sni", "video.example"]);
    assert_eq!(refused.status.code(), Some(1));
}

#[test]
fn sigterm_drains_and_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let store = make_store(dir.path(), &["video.example"]);
    let mut server = Server::start(&store, &[]);
    let ok = run(&["connect", &server.addr, "--sni", "video.example"]);
    assert!(ok.status.success());
    let status = Command::new("kill")
        .args(["-TERM", &server.child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(server.wait_for(|v| v["fields"]["message"] == "stopped").is_some());
    assert!(server.child.wait().unwrap().success());
}

#[test]
fn sniff_reports_simulated_captures() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("rates.txt");
    fs::write(&map, "video.example 1M\n").unwrap();
    for (mode, expected) in [
        ("legacy", "flow 0: IDENTIFIED video.example"),
        ("masked", "flow 0: UNKNOWN (1 plaintext ClientHello, 0 SNI)"),
    ] {
        let cap = dir.path().join(format!("{mode}.cap"));
        let csv = dir.path().join(format!("{mode}.csv"));
        let out = run(&[
            "shapesim", "--mode", mode, "--payload", "20000", "--rate-map", map.to_str().unwrap(),
            "--csv", csv.to_str().unwrap(), "--capture", cap.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let report = stdout(&run(&["sniff", cap.to_str().unwrap()]));
        assert_eq!(report.lines().next(), Some(expected), "{report}");
        assert!(report.contains("C2S client_hello"));
    }

    let empty = dir.path().join("empty.cap");
    fs::write(&empty, "").unwrap();
    let out = run(&["sniff", empty.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());

    let full = fs::read_to_string(dir.path().join("masked.cap")).unwrap();
    fs::write(&empty, &full[..full.len() / 2]).unwrap();
    assert_ne!(run(&["sniff", empty.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn shapesim_is_deterministic_and_handles_empty_payloads() {
    let args = ["shapesim", "--payload", "300000", "--seed", "4"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).starts_with("t_seconds,throughput_bps\n0,"));

    let empty = run(&["shapesim", "--payload", "0"]);
    assert!(empty.status.success());
    assert_eq!(stdout(&empty), "t_seconds,throughput_bps\n");

    let bad = run(&["shapesim", "--default-rate", "fast"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bench_schema_does_not_depend_on_repeats() {
    let keys = |repeats: &str| {
        let out = run(&["bench", "--payload", "200000", "--repeats", repeats, "--json"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        let fraction = v["extra_handshake_fraction"].as_f64().unwrap();
        assert!((0.0..1.0).contains(&fraction));
        v.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    assert_eq!(keys("1"), keys("3"));

    let zero = run(&["bench", "--payload", "0", "--repeats", "1"]);
    assert!(stdout(&zero).contains("extra_handshake_fraction 0."));
}

#[test]
fn wallclock_bench_runs_over_loopback() {
    let out = run(&["bench", "--wallclock", "--payload", "100000", "--repeats", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("masked_seconds"));
}
