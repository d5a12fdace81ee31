#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

pub fn olcais() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_olcais"));
    cmd.env_remove("OLCAIS_OUTPUT_DIR").env_remove("OLCAIS_PORT");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    olcais().args(args).output().expect("binary runs")
}

pub fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

/// `olcais serve` on a free port; killed on drop.
pub struct Server {
    child: Child,
    pub port: u16,
}

impl Server {
    pub fn start() -> Server {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let child = olcais()
            .args(["serve", "-p", &port.to_string()])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let deadline = Instant::now() + Duration::from_secs(10);
        while TcpStream::connect(("127.0.0.1", port)).is_err() {
            assert!(Instant::now() < deadline, "server did not come up");
            std::thread::sleep(Duration::from_millis(20));
        }
        Server { child, port }
    }

    /// Minimal HTTP/1.1 exchange; returns (status, body).
    pub fn request(&self, method: &str, path: &str, body: &str) -> (u16, Vec<u8>) {
        let mut s = TcpStream::connect(("127.0.0.1", self.port)).unwrap();
        write!(
            s,
            "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        let mut raw = Vec::new();
        s.read_to_end(&mut raw).unwrap();
        let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
        let head = String::from_utf8_lossy(&raw[..split]).to_string();
        let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!(!head.to_ascii_lowercase().contains("transfer-encoding: chunked"), "{head}");
        (status, raw[split + 4..].to_vec())
    }

    /// Creates a run from `config` and waits for it to finish; returns the
    /// exported iterations CSV.
    pub fn run_to_csv(&self, config: &str) -> Vec<u8> {
        let (status, body) = self.request("POST", "/runs", config);
        assert_eq!(status, 201, "{}", String::from_utf8_lossy(&body));
        let created: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let id = created["run_id"].as_str().unwrap().to_string();
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let (_, body) = self.request("GET", &format!("/runs/{id}"), "");
            let handle: serde_json::Value = serde_json::from_slice(&body).unwrap();
            if handle["status"] == "finished" {
                break;
            }
            assert!(Instant::now() < deadline, "run {id} stuck: {handle}");
            std::thread::sleep(Duration::from_millis(20));
        }
        self.request("GET", &format!("/runs/{id}/export.csv"), "").1
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
