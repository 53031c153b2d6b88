#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

pub fn veil() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_veil"));
    cmd.env("VEIL_LOG", "info");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    veil().args(args).output().expect("spawn veil")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a store with front.example as default plus the given names.
pub fn make_store(dir: &Path, named: &[&str]) -> PathBuf {
    let path = dir.join("store.txt");
    let out = run(&["certgen", "--subject", "front.example", "--default", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in named {
        let out = run(&["certgen", "--subject", name, "--out", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    path
}

/// A running `veil serve`, killed on drop.
pub struct Server {
    pub child: Child,
    pub addr: String,
    pub log: mpsc::Receiver<String>,
}

impl Server {
    pub fn start(store: &Path, extra: &[&str]) -> Server {
        let mut child = veil()
            .args(["serve", "--listen", "127.0.0.1:0", "--store", store.to_str().unwrap()])
            .args(extra)
            .stderr(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .expect("spawn server");
        let (tx, rx) = mpsc::channel();
        let stderr = child.stderr.take().unwrap();
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let ready = rx
            .recv_timeout(Duration::from_secs(20))
            .expect("server printed nothing");
        let json: serde_json::Value = serde_json::from_str(&ready).expect("json log line");
        assert_eq!(json["fields"]["message"], "ready", "{ready}");
        let addr = json["fields"]["addr"].as_str().unwrap().to_owned();
        Server { child, addr, log: rx }
    }

    /// Collects log lines until one satisfies `pred` or the timeout passes.
    pub fn wait_for(&self, pred: impl Fn(&serde_json::Value) -> bool) -> Option<serde_json::Value> {
        while let Ok(line) = self.log.recv_timeout(Duration::from_secs(20)) {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&line) {
                if pred(&v) {
                    return Some(v);
                }
            }
        }
        None
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
