//! Minimal JSON-RPC-over-HTTP mock server for exercising the fetcher:
//! counts per-method hits, tracks the maximum number of requests in flight,
//! and can be told to fail specific addresses or whole methods.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

use deadwood_core::types::{to_hex, Address, U256};

/// Canned state served for one address.
#[derive(Clone, Debug, Default)]
pub struct MockAccount {
    pub balance: U256,
    pub nonce: u64,
    pub code: Vec<u8>,
}

#[derive(Default)]
pub struct MockState {
    /// Block number served by eth_blockNumber.
    pub block_number: u64,
    pub accounts: Mutex<BTreeMap<Address, MockAccount>>,
    /// Canned results for exact (method, params-json) pairs.
    pub canned: Mutex<BTreeMap<(String, String), Value>>,
    /// Addresses whose state queries answer HTTP 500.
    pub failing_addresses: Mutex<BTreeSet<String>>,
    /// Methods that answer "method not found".
    pub unsupported: Mutex<BTreeSet<String>>,
    /// Remaining requests to fail with HTTP 500 before recovering.
    pub fail_next: AtomicI64,
    /// Artificial handling delay, to make request overlap observable.
    pub delay: Mutex<Duration>,
    pub hits: Mutex<BTreeMap<String, u64>>,
    /// Block tags observed on state queries (second positional parameter).
    pub seen_tags: Mutex<BTreeSet<String>>,
    pub inflight: AtomicI64,
    pub max_inflight: AtomicI64,
}

impl MockState {
    pub fn hit_count(&self, method: &str) -> u64 {
        self.hits.lock().unwrap().get(method).copied().unwrap_or(0)
    }

    pub fn total_hits(&self) -> u64 {
        self.hits.lock().unwrap().values().sum()
    }

    fn respond(&self, method: &str, params: &Value) -> Result<Value, Fault> {
        *self
            .hits
            .lock()
            .unwrap()
            .entry(method.to_string())
            .or_insert(0) += 1;
        if matches!(
            method,
            "eth_getBalance" | "eth_getTransactionCount" | "eth_getCode"
        ) {
            if let Some(tag) = params.get(1).and_then(Value::as_str) {
                self.seen_tags.lock().unwrap().insert(tag.to_string());
            }
        }

        if self.fail_next.fetch_sub(1, Ordering::SeqCst) > 0 {
            return Err(Fault::Http500);
        }
        if self.unsupported.lock().unwrap().contains(method) {
            return Err(Fault::MethodNotFound);
        }

        let first_param = params
            .get(0)
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_ascii_lowercase();
        if self
            .failing_addresses
            .lock()
            .unwrap()
            .contains(&first_param)
        {
            return Err(Fault::Http500);
        }
        if let Some(value) = self
            .canned
            .lock()
            .unwrap()
            .get(&(method.to_string(), params.to_string()))
        {
            return Ok(value.clone());
        }

        let account = || -> MockAccount {
            first_param
                .parse::<Address>()
                .ok()
                .and_then(|a| self.accounts.lock().unwrap().get(&a).cloned())
                .unwrap_or_default()
        };
        match method {
            "eth_blockNumber" => Ok(json!(format!("0x{:x}", self.block_number))),
            "eth_getBalance" => Ok(json!(format!("0x{:x}", account().balance))),
            "eth_getTransactionCount" => Ok(json!(format!("0x{:x}", account().nonce))),
            "eth_getCode" => Ok(json!(to_hex(&account().code))),
            _ => Err(Fault::MethodNotFound),
        }
    }
}

enum Fault {
    Http500,
    MethodNotFound,
}

pub struct MockRpc {
    pub state: Arc<MockState>,
    address: String,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockRpc {
    pub fn start(state: MockState) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let address = format!("http://{}", listener.local_addr().unwrap());
        let state = Arc::new(state);
        let shutdown = Arc::new(AtomicBool::new(false));

        let accept_state = state.clone();
        let accept_shutdown = shutdown.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let state = accept_state.clone();
                std::thread::spawn(move || handle_connection(stream, &state));
            }
        });

        MockRpc {
            state,
            address,
            shutdown,
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> String {
        self.address.clone()
    }
}

impl Drop for MockRpc {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.address.trim_start_matches("http://"));
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, state: &MockState) {
    let Some(body) = read_http_request(&mut stream) else {
        return;
    };
    let request: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(_) => return,
    };
    let method = request.get("method").and_then(Value::as_str).unwrap_or("");
    let params = request.get("params").cloned().unwrap_or(Value::Null);
    let id = request.get("id").cloned().unwrap_or(Value::Null);

    let inflight = state.inflight.fetch_add(1, Ordering::SeqCst) + 1;
    state.max_inflight.fetch_max(inflight, Ordering::SeqCst);
    let delay = *state.delay.lock().unwrap();
    if !delay.is_zero() {
        std::thread::sleep(delay);
    }
    let outcome = state.respond(method, &params);
    state.inflight.fetch_sub(1, Ordering::SeqCst);

    let (status, payload) = match outcome {
        Ok(result) => (
            "200 OK",
            json!({ "jsonrpc": "2.0", "id": id, "result": result }),
        ),
        Err(Fault::MethodNotFound) => (
            "200 OK",
            json!({ "jsonrpc": "2.0", "id": id, "error": { "code": -32601, "message": "method not found" } }),
        ),
        Err(Fault::Http500) => (
            "500 Internal Server Error",
            json!({ "error": "injected failure" }),
        ),
    };
    let body = payload.to_string();
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

/// Reads one HTTP/1.1 request and returns its body.
fn read_http_request(stream: &mut TcpStream) -> Option<Vec<u8>> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut buffer = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end = loop {
        if let Some(pos) = find_header_end(&buffer) {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buffer.extend_from_slice(&chunk[..n]);
    };

    let headers = String::from_utf8_lossy(&buffer[..header_end]).to_ascii_lowercase();
    let content_length: usize = headers
        .lines()
        .find_map(|line| line.strip_prefix("content-length:"))
        .and_then(|v| v.trim().parse().ok())?;

    let mut body = buffer[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);
    Some(body)
}

fn find_header_end(buffer: &[u8]) -> Option<usize> {
    buffer.windows(4).position(|w| w == b"\r\n\r\n")
}
