//! JSON-RPC 2.0 client that populates local stores from an Ethereum node
//! instead of dump files.
//!
//! State queries (balance, transaction count, code) are pinned to one block
//! tag chosen at the start of a run, so a crawl sees a single consistent
//! world state. Responses are cached on disk keyed by (method, params,
//! block tag); an interrupted crawl picks up where it left off. Requests
//! run on a bounded worker pool and results flow through one collector.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{AccountState, TxKind, TxRecord};
use crate::types::{parse_hex_bytes, parse_u256, Address, Hash32, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Base delay; attempt n sleeps backoff * 2^(n-1).
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: Duration::from_millis(100),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpcEndpoint {
    pub url: String,
    pub request_timeout: Duration,
    pub max_concurrent_requests: usize,
    pub retry: RetryPolicy,
}

impl RpcEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        RpcEndpoint {
            url: url.into(),
            request_timeout: Duration::from_secs(30),
            max_concurrent_requests: 8,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RpcError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
    #[error("method {0} not supported by this endpoint")]
    Unsupported(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("malformed response while {context}: {excerpt}")]
    Malformed { context: String, excerpt: String },
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

fn malformed(context: &str, value: &Value) -> RpcError {
    let mut excerpt = value.to_string();
    excerpt.truncate(200);
    RpcError::Malformed {
        context: context.to_string(),
        excerpt,
    }
}

/// One opcode step of an execution trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub pc: u64,
    pub op: String,
}

/// A call-family step with its resolved target address.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCall {
    pub op: String,
    pub target: Address,
    pub at_pc: u64,
}

/// Summary of an executed transaction: the opcode stream and the
/// call-family operations with their target addresses.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: Vec<TraceStep>,
    pub calls: Vec<TraceCall>,
}

impl TraceSummary {
    /// True when the trace contains a DELEGATECALL to `target`.
    pub fn delegatecalls_to(&self, target: &Address) -> bool {
        self.calls
            .iter()
            .any(|c| c.op == "DELEGATECALL" && c.target == *target)
    }
}

pub struct RpcClient {
    endpoint: RpcEndpoint,
    http: reqwest::blocking::Client,
    cache_dir: Option<PathBuf>,
    pinned_tag: Mutex<Option<String>>,
    next_id: AtomicU64,
}

impl RpcClient {
    pub fn new(endpoint: RpcEndpoint) -> Result<Self, RpcError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(endpoint.request_timeout)
            .build()
            .map_err(|e| RpcError::Transport(e.to_string()))?;
        Ok(RpcClient {
            endpoint,
            http,
            cache_dir: None,
            pinned_tag: Mutex::new(None),
            next_id: AtomicU64::new(1),
        })
    }

    /// Enables the on-disk response cache rooted at `dir`.
    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Result<Self, RpcError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        self.cache_dir = Some(dir);
        Ok(self)
    }

    /// Pins state queries to an explicit block tag (hex number or "latest").
    pub fn set_block_tag(&self, tag: impl Into<String>) {
        *self.pinned_tag.lock().expect("tag lock") = Some(tag.into());
    }

    /// The pinned block tag, fetched from the node on first use.
    pub fn block_tag(&self) -> Result<String, RpcError> {
        {
            let guard = self.pinned_tag.lock().expect("tag lock");
            if let Some(tag) = guard.as_ref() {
                return Ok(tag.clone());
            }
        }
        let value = self.call_raw("eth_blockNumber", json!([]))?;
        let tag = value
            .as_str()
            .ok_or_else(|| malformed("pinning block tag", &value))?
            .to_string();
        *self.pinned_tag.lock().expect("tag lock") = Some(tag.clone());
        Ok(tag)
    }

    fn cache_path(&self, method: &str, params: &Value, tag: &str) -> Option<PathBuf> {
        let dir = self.cache_dir.as_ref()?;
        let key = json!({ "method": method, "params": params, "tag": tag });
        let digest = Sha256::digest(key.to_string().as_bytes());
        Some(dir.join(format!("{}.json", hex::encode(digest))))
    }

    /// Issues `method` over HTTP with retries; no caching.
    fn call_raw(&self, method: &str, params: Value) -> Result<Value, RpcError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = json!({ "jsonrpc": "2.0", "id": id, "method": method, "params": params });
        let mut last_transport = String::new();
        for attempt in 0..self.endpoint.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.endpoint.retry.backoff * 2u32.pow(attempt - 1));
            }
            let sent = self.http.post(&self.endpoint.url).json(&body).send();
            let response = match sent.and_then(|r| r.error_for_status()) {
                Ok(r) => r,
                Err(e) => {
                    last_transport = e.to_string();
                    continue;
                }
            };
            let value: Value = match response.json() {
                Ok(v) => v,
                Err(e) => {
                    last_transport = format!("undecodable response body: {e}");
                    continue;
                }
            };
            if let Some(error) = value.get("error") {
                let code = error.get("code").and_then(Value::as_i64).unwrap_or(0);
                let message = error
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown error")
                    .to_string();
                // -32601: method not found.
                return Err(if code == -32601 {
                    RpcError::Unsupported(method.to_string())
                } else {
                    RpcError::Rpc { code, message }
                });
            }
            return match value.get("result") {
                Some(result) => Ok(result.clone()),
                None => Err(malformed("reading result", &value)),
            };
        }
        Err(RpcError::Transport(format!(
            "{method} failed after {} attempts: {last_transport}",
            self.endpoint.retry.max_attempts
        )))
    }

    /// Cached call: a disk hit under (method, params, tag) skips the network.
    fn call_cached(&self, method: &str, params: Value, tag: &str) -> Result<Value, RpcError> {
        let path = self.cache_path(method, &params, tag);
        if let Some(path) = &path {
            if let Ok(text) = std::fs::read_to_string(path) {
                if let Ok(value) = serde_json::from_str(&text) {
                    return Ok(value);
                }
            }
        }
        let value = self.call_raw(method, params)?;
        if let Some(path) = &path {
            std::fs::write(path, serde_json::to_string(&value).expect("serializable"))?;
        }
        Ok(value)
    }

    fn expect_str(value: &Value, context: &str) -> Result<String, RpcError> {
        value
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| malformed(context, value))
    }

    /// Assembles an account's state from balance, transaction-count, and
    /// code queries at the pinned block tag. Storage root is not available
    /// over JSON-RPC.
    pub fn fetch_account(&self, address: &Address) -> Result<AccountState, RpcError> {
        let tag = self.block_tag()?;
        let addr = address.to_string();

        let balance_raw = self.call_cached("eth_getBalance", json!([addr, tag]), &tag)?;
        let balance =
            parse_u256(&Self::expect_str(&balance_raw, "parsing balance")?).map_err(|e| {
                RpcError::Malformed {
                    context: "parsing balance".into(),
                    excerpt: e,
                }
            })?;

        let nonce_raw = self.call_cached("eth_getTransactionCount", json!([addr, tag]), &tag)?;
        let nonce = parse_u256(&Self::expect_str(&nonce_raw, "parsing nonce")?)
            .map_err(|e| RpcError::Malformed {
                context: "parsing nonce".into(),
                excerpt: e,
            })?
            .as_u64();

        let code_raw = self.call_cached("eth_getCode", json!([addr, tag]), &tag)?;
        let code = parse_hex_bytes(&Self::expect_str(&code_raw, "parsing code")?).map_err(|e| {
            RpcError::Malformed {
                context: "parsing code".into(),
                excerpt: e.to_string(),
            }
        })?;

        Ok(AccountState {
            address: *address,
            nonce,
            balance,
            storage_root: None,
            code,
        })
    }

    /// Fetches many accounts with at most `max_concurrent_requests` in
    /// flight; failures are reported per address and do not stop the batch.
    pub fn fetch_accounts(
        &self,
        addresses: &[Address],
    ) -> (Vec<AccountState>, Vec<(Address, String)>) {
        // Pin the tag up front so workers never race the first pin.
        if let Err(e) = self.block_tag() {
            return (
                Vec::new(),
                addresses.iter().map(|a| (*a, e.to_string())).collect(),
            );
        }
        let queue: Mutex<VecDeque<Address>> = Mutex::new(addresses.iter().copied().collect());
        let (sender, receiver) = mpsc::channel();
        let workers = self
            .endpoint
            .max_concurrent_requests
            .max(1)
            .min(addresses.len().max(1));

        std::thread::scope(|scope| {
            for _ in 0..workers {
                let sender = sender.clone();
                let queue = &queue;
                scope.spawn(move || loop {
                    let Some(address) = queue.lock().expect("queue lock").pop_front() else {
                        break;
                    };
                    let result = self.fetch_account(&address);
                    if sender.send((address, result)).is_err() {
                        break;
                    }
                });
            }
            drop(sender);

            // Single serialized writer on the calling thread.
            let mut states = Vec::new();
            let mut failures = Vec::new();
            for (address, result) in receiver {
                match result {
                    Ok(state) => states.push(state),
                    Err(e) => failures.push((address, e.to_string())),
                }
            }
            states.sort_by_key(|s| s.address);
            failures.sort_by_key(|(a, _)| *a);
            (states, failures)
        })
    }

    /// Fetches one transaction and, when available, its receipt for the gas
    /// actually used and the block header for the timestamp.
    pub fn fetch_transaction(&self, hash: &Hash32) -> Result<TxRecord, RpcError> {
        let tx = self.call_cached("eth_getTransactionByHash", json!([hash.to_string()]), "any")?;
        if tx.is_null() {
            return Err(RpcError::NotFound(hash.to_string()));
        }
        let field_str = |name: &str| -> Result<String, RpcError> {
            Self::expect_str(tx.get(name).unwrap_or(&Value::Null), name)
        };
        let parse_amount = |name: &str| -> Result<U256, RpcError> {
            parse_u256(&field_str(name)?).map_err(|e| RpcError::Malformed {
                context: name.into(),
                excerpt: e,
            })
        };

        let from: Address = field_str("from")?
            .parse()
            .map_err(|_| malformed("parsing from", &tx))?;
        let to = match tx.get("to") {
            Some(Value::Null) | None => None,
            Some(v) => Some(
                Self::expect_str(v, "to")?
                    .parse::<Address>()
                    .map_err(|_| malformed("parsing to", &tx))?,
            ),
        };
        let block_number = parse_amount("blockNumber")?.as_u64();

        // Receipt: gas used, created address, failure status. Optional.
        let mut gas_used = 0u64;
        let mut created_address = None;
        let mut error = None;
        match self.call_cached(
            "eth_getTransactionReceipt",
            json!([hash.to_string()]),
            "any",
        ) {
            Ok(receipt) if !receipt.is_null() => {
                if let Some(v) = receipt.get("gasUsed").and_then(Value::as_str) {
                    gas_used = parse_u256(v).map(|u| u.as_u64()).unwrap_or(0);
                }
                if let Some(v) = receipt.get("contractAddress").and_then(Value::as_str) {
                    created_address = v.parse::<Address>().ok();
                }
                if receipt.get("status").and_then(Value::as_str) == Some("0x0") {
                    error = Some("failed".to_string());
                }
            }
            _ => {}
        }

        // Block header for the timestamp. Optional.
        let timestamp = self
            .call_cached(
                "eth_getBlockByNumber",
                json!([field_str("blockNumber")?, false]),
                "any",
            )
            .ok()
            .and_then(|block| {
                block
                    .get("timestamp")
                    .and_then(Value::as_str)
                    .and_then(|t| parse_u256(t).ok())
                    .map(|u| u.as_u64())
            })
            .unwrap_or(0);

        Ok(TxRecord {
            hash: *hash,
            kind: TxKind::External,
            from,
            to,
            created_address,
            value: parse_amount("value")?,
            gas_used,
            gas_price: parse_amount("gasPrice").unwrap_or_default(),
            input: tx
                .get("input")
                .and_then(Value::as_str)
                .and_then(|s| parse_hex_bytes(s).ok())
                .unwrap_or_default(),
            error,
            timestamp,
            block_number,
            index: tx
                .get("transactionIndex")
                .and_then(Value::as_str)
                .and_then(|s| parse_u256(s).ok())
                .map(|u| u.as_u64() as u32),
        })
    }

    /// Fetches the executed-opcode trace of a transaction and summarizes the
    /// call-family steps with their target addresses.
    pub fn fetch_trace(&self, hash: &Hash32) -> Result<TraceSummary, RpcError> {
        let raw = self.call_cached(
            "debug_traceTransaction",
            json!([hash.to_string(), {}]),
            "any",
        )?;
        if raw.is_null() {
            return Err(RpcError::NotFound(hash.to_string()));
        }
        let logs = raw
            .get("structLogs")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("reading structLogs", &raw))?;

        let mut summary = TraceSummary::default();
        for log in logs {
            let pc = log.get("pc").and_then(Value::as_u64).unwrap_or(0);
            let op = log
                .get("op")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string();
            if matches!(
                op.as_str(),
                "CALL" | "CALLCODE" | "DELEGATECALL" | "STATICCALL"
            ) {
                // Trace stacks are bottom-to-top; the target address is the
                // second item from the top.
                if let Some(stack) = log.get("stack").and_then(Value::as_array) {
                    if stack.len() >= 2 {
                        if let Some(word) = stack[stack.len() - 2].as_str() {
                            if let Ok(value) = parse_u256(word) {
                                summary.calls.push(TraceCall {
                                    op: op.clone(),
                                    target: Address::from_word(&value),
                                    at_pc: pc,
                                });
                            }
                        }
                    }
                }
            }
            summary.steps.push(TraceStep { pc, op });
        }
        Ok(summary)
    }
}
