//! Shared helpers for integration tests: a scripted HTTP server, a sentinel
//! listener that records any connection, and a CLI runner.

#![allow(dead_code)]

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

pub struct Request {
    pub method: String,
    pub url: String,
    pub body: String,
    pub authorization: Option<String>,
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn ok(body: impl Into<String>) -> Self {
        Reply { status: 200, body: body.into() }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Reply { status, body: body.into() }
    }
}

/// `tiny_http` server answering every request through `handler`.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&Request) -> Reply + Send + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let url = format!("http://{}", server.server_addr().to_ip().expect("ip listener"));
        let hits = Arc::new(AtomicUsize::new(0));
        let (s, h) = (server.clone(), hits.clone());
        let thread = std::thread::spawn(move || {
            for mut rq in s.incoming_requests() {
                h.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                let _ = rq.as_reader().read_to_string(&mut body);
                let authorization = rq
                    .headers()
                    .iter()
                    .find(|x| x.field.equiv("Authorization"))
                    .map(|x| x.value.as_str().to_string());
                let req = Request { method: rq.method().as_str().to_string(), url: rq.url().to_string(), body, authorization };
                let reply = handler(&req);
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let resp = tiny_http::Response::from_string(reply.body).with_status_code(reply.status).with_header(header);
                let _ = rq.respond(resp);
            }
        });
        MockServer { url, hits, server, thread: Some(thread) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Listener that accepts nothing useful: every connection is counted as a
/// failure and dropped.
pub struct Sentinel {
    pub url: String,
    connections: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Sentinel {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind sentinel");
        listener.set_nonblocking(true).expect("nonblocking sentinel");
        let url = format!("http://{}", listener.local_addr().unwrap());
        let connections = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let (c, s) = (connections.clone(), stop.clone());
        let thread = std::thread::spawn(move || {
            while !s.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok(_) => {
                        c.fetch_add(1, Ordering::SeqCst);
                    }
                    Err(_) => std::thread::sleep(std::time::Duration::from_millis(5)),
                }
            }
        });
        Sentinel { url, connections, stop, thread: Some(thread) }
    }

    pub fn connections(&self) -> usize {
        self.connections.load(Ordering::SeqCst)
    }
}

impl Drop for Sentinel {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Runs the `solaudit` binary with a clean configuration environment.
pub fn solaudit(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_solaudit"));
    cmd.args(args).env_remove("SOLAUDIT_CONFIG").env("RUST_LOG", "error");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn solaudit")
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

pub fn tool_reply(name: &str, arguments: &serde_json::Value) -> String {
    serde_json::json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {
            "role": "assistant",
            "content": null,
            "tool_calls": [{"id": "call_0", "type": "function", "function": {"name": name, "arguments": arguments.to_string()}}],
        }, "finish_reason": "tool_calls"}],
    })
    .to_string()
}
