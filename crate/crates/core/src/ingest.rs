//! Contract bytecode ingestion: `eth_getCode` over JSON-RPC and normalization
//! of file-based corpora into canonical JSONL.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use crate::dataset::{read_jsonl_records, write_jsonl_records, RawRecord};
use crate::disasm::{parse_hex, Bytecode, CodeSource};
use crate::error::{Error, Result};

/// Environment variable that overrides the configured endpoint URL.
pub const RPC_URL_ENV: &str = "OPCLASS_RPC_URL";

#[derive(Debug, Clone, PartialEq)]
pub struct RpcEndpoint {
    pub url: String,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl RpcEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        RpcEndpoint {
            url: url.into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
        }
    }

    /// `url` unless [`RPC_URL_ENV`] is set.
    pub fn from_env_or(url: impl Into<String>) -> Self {
        match std::env::var(RPC_URL_ENV) {
            Ok(v) if !v.trim().is_empty() => Self::new(v.trim()),
            _ => Self::new(url),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::InvalidConfig("RPC timeout must be positive".into()));
        }
        Ok(())
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub fn is_address(s: &str) -> bool {
    s.len() == 42
        && s.starts_with("0x")
        && s.as_bytes()[2..].iter().all(u8::is_ascii_hexdigit)
}

/// The exact request body sent for `eth_getCode`.
pub fn get_code_request(id: u64, address: &str) -> String {
    format!(
        r#"{{"jsonrpc":"2.0","id":{id},"method":"eth_getCode","params":["{address}","latest"]}}"#
    )
}

#[derive(Debug, Deserialize)]
struct RpcResponse {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    result: Option<String>,
    #[serde(default)]
    error: Option<RpcErrorBody>,
}

#[derive(Debug, Deserialize)]
struct RpcErrorBody {
    code: i64,
    message: String,
}

fn parse_response(id: u64, body: &str) -> Result<Bytecode> {
    let resp: RpcResponse =
        serde_json::from_str(body).map_err(|e| Error::RpcTransport(format!("bad response: {e}")))?;
    if let Some(err) = resp.error {
        return Err(Error::RpcError {
            code: err.code,
            message: err.message,
        });
    }
    if let Some(got) = &resp.id {
        if got.as_u64() != Some(id) {
            return Err(Error::RpcTransport(format!("response id {got} does not match {id}")));
        }
    }
    let result = resp
        .result
        .ok_or_else(|| Error::RpcTransport("response has neither result nor error".into()))?;
    let mut code = parse_hex(&result).map_err(|e| Error::RpcTransport(format!("bad code: {e}")))?;
    code.source = CodeSource::Rpc;
    Ok(code)
}

fn post(ep: &RpcEndpoint, body: &str) -> std::result::Result<String, String> {
    let agent = ureq::AgentBuilder::new().timeout(ep.timeout).build();
    match agent
        .post(&ep.url)
        .set("Content-Type", "application/json")
        .send_string(body)
    {
        Ok(resp) => resp.into_string().map_err(|e| e.to_string()),
        // Nodes report JSON-RPC errors with non-2xx statuses too; keep the body.
        Err(ureq::Error::Status(code, resp)) => match resp.into_string() {
            Ok(text) if text.contains("\"error\"") => Ok(text),
            _ => Err(format!("HTTP status {code}")),
        },
        Err(e) => Err(e.to_string()),
    }
}

/// Fetches deployed code for `address`. Empty code means an externally owned account.
pub fn fetch_code(ep: &RpcEndpoint, address: &str) -> Result<Bytecode> {
    if !is_address(address) {
        return Err(Error::BadAddress(address.to_owned()));
    }
    ep.validate()?;
    let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
    let body = get_code_request(id, address);
    let mut last = String::new();
    for attempt in 0..=ep.max_retries {
        match post(ep, &body) {
            Ok(text) => return parse_response(id, &text),
            Err(e) => {
                log::warn!("eth_getCode {address} attempt {} failed: {e}", attempt + 1);
                last = e;
            }
        }
    }
    Err(Error::RpcTransport(last))
}

/// Fetches many addresses with at most `max_in_flight` concurrent requests.
/// Results are in input order.
pub fn fetch_many(ep: &RpcEndpoint, addresses: &[String], max_in_flight: usize) -> Vec<Result<Bytecode>> {
    let workers = max_in_flight.max(1).min(addresses.len().max(1));
    let next = AtomicU64::new(0);
    let slots: Vec<Mutex<Option<Result<Bytecode>>>> =
        addresses.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed) as usize;
                let Some(addr) = addresses.get(i) else { break };
                let r = fetch_code(ep, addr);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// Splits `<address>_<category>.hex` into its parts.
fn parse_hex_file_name(name: &str) -> Option<(&str, &str)> {
    let stem = name.strip_suffix(".hex")?;
    let (address, category) = stem.split_once('_')?;
    (!address.is_empty() && !category.is_empty()).then_some((address, category))
}

fn canonical(mut rec: RawRecord) -> std::result::Result<RawRecord, String> {
    let code = parse_hex(&rec.bytecode).map_err(|e| e.to_string())?;
    rec.bytecode = code.to_hex();
    rec.address = rec.address.to_ascii_lowercase();
    Ok(rec)
}

/// Rewrites a JSONL corpus, or a directory of `.hex` files, as canonical JSONL.
/// Records with unparseable bytecode are skipped with a warning.
pub fn normalize_corpus(input: &Path, output: &Path) -> Result<usize> {
    let mut raw = Vec::new();
    if input.is_dir() {
        let mut names: Vec<String> = fs::read_dir(input)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(".hex"))
            .collect();
        names.sort();
        for name in names {
            let Some((address, category)) = parse_hex_file_name(&name) else {
                log::warn!("skipping {name}: expected <address>_<category>.hex");
                continue;
            };
            let text = fs::read_to_string(input.join(&name))?;
            raw.push((
                name.clone(),
                RawRecord {
                    address: address.to_owned(),
                    bytecode: text.trim().to_owned(),
                    category: Some(category.to_owned()),
                    balance: None,
                    nonce: None,
                    txs: None,
                },
            ));
        }
    } else {
        for (i, rec) in read_jsonl_records(input)?.into_iter().enumerate() {
            raw.push((format!("line {}", i + 1), rec));
        }
    }

    let mut records = Vec::with_capacity(raw.len());
    for (origin, rec) in raw {
        match canonical(rec) {
            Ok(r) => records.push(r),
            Err(e) => log::warn!("skipping {origin}: {e}"),
        }
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    write_jsonl_records(output, &records)
}
