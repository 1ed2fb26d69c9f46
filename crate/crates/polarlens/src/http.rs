//! Minimal blocking JSON server used by the stub scorer and the fixture API.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use anyhow::{anyhow, Context};
use serde::Serialize;

pub struct Request {
    pub method: String,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub api_key: Option<String>,
    pub body: String,
}

impl Request {
    pub fn query_param(&self, key: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn json<T: Serialize>(value: &T) -> Self {
        match serde_json::to_string(value) {
            Ok(body) => Reply { status: 200, body },
            Err(e) => Reply::error(500, &e.to_string()),
        }
    }

    pub fn error(status: u16, msg: &str) -> Self {
        Reply { status, body: serde_json::json!({ "error": msg }).to_string() }
    }
}

pub const API_KEY_HEADER: &str = "x-api-key";

fn split_url(url: &str) -> (String, Vec<(String, String)>) {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    let query = query
        .split('&')
        .filter(|kv| !kv.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
            (k.to_string(), v.to_string())
        })
        .collect();
    (path.to_string(), query)
}

/// A server answering on a background thread until dropped.
pub struct BackgroundServer {
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
    addr: SocketAddr,
}

impl BackgroundServer {
    pub fn spawn<F>(addr: &str, handler: F) -> anyhow::Result<Self>
    where
        F: Fn(&Request) -> Reply + Send + 'static,
    {
        let server = Arc::new(tiny_http::Server::http(addr).map_err(|e| anyhow!("bind {addr}: {e}"))?);
        let addr = server
            .server_addr()
            .to_ip()
            .context("server is not listening on an IP socket")?;
        let worker = Arc::clone(&server);
        let handle = std::thread::spawn(move || {
            for mut raw in worker.incoming_requests() {
                let mut body = String::new();
                let reply = match raw.as_reader().read_to_string(&mut body) {
                    Ok(_) => {
                        let (path, query) = split_url(raw.url());
                        let api_key = raw
                            .headers()
                            .iter()
                            .find(|h| h.field.equiv(API_KEY_HEADER))
                            .map(|h| h.value.as_str().to_string());
                        let req = Request { method: raw.method().as_str().to_uppercase(), path, query, api_key, body };
                        handler(&req)
                    }
                    Err(e) => Reply::error(400, &e.to_string()),
                };
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
                let resp = tiny_http::Response::from_string(reply.body).with_status_code(reply.status).with_header(header);
                if let Err(e) = raw.respond(resp) {
                    log::warn!("failed to send response: {e}");
                }
            }
        });
        Ok(BackgroundServer { server, handle: Some(handle), addr })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the process is killed.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
