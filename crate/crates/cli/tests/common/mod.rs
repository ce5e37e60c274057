//! Helpers for driving the `fet` binary.
#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::time::Duration;

pub fn fet() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fet"));
    c.env("FET_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    fet().args(args).output().expect("running fet")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Deterministic two-class table: the label is `a + b > 1` with every 10th
/// label flipped; `c` is noise and `d` a small integer code.
pub fn write_synthetic(path: &Path, rows: usize) {
    let mut s = String::from("a,b,c,d,label\n");
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..rows {
        let (a, b, c) = (next(), next(), next());
        let d = (next() * 4.0).floor();
        let mut y = usize::from(a + b > 1.0);
        if i % 10 == 9 {
            y = 1 - y;
        }
        s.push_str(&format!("{a:.4},{b:.4},{c:.4},{d},{}\n", ["no", "yes"][y]));
    }
    std::fs::write(path, s).unwrap();
}

/// Writes a run config next to the data and returns its path.
pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// A running `fet master` with the address it reported.
pub struct Master {
    pub child: Child,
    pub addr: String,
    pub stderr_rest: mpsc::Receiver<String>,
}

/// Starts `fet master` on an ephemeral port and waits for its
/// `listening on ADDR` line.
pub fn spawn_master(args: &[&str]) -> Master {
    let mut child = fet()
        .arg("master")
        .args(args)
        .args(["--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawning master");
    let err = child.stderr.take().unwrap();
    let (tx, rx) = mpsc::channel();
    let (rest_tx, rest_rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut sent = false;
        let mut rest = String::new();
        for line in BufReader::new(err).lines().map_while(Result::ok) {
            if !sent {
                if let Some(addr) = line.strip_prefix("listening on ") {
                    tx.send(addr.trim().to_owned()).ok();
                    sent = true;
                    continue;
                }
            }
            rest.push_str(&line);
            rest.push('\n');
        }
        rest_tx.send(rest).ok();
    });
    let addr = rx.recv_timeout(Duration::from_secs(30)).expect("master did not report its address");
    Master {
        child,
        addr,
        stderr_rest: rest_rx,
    }
}
