use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use opclass_core::dataset::read_jsonl_records;
use opclass_core::ingest::{fetch_code, fetch_many, normalize_corpus, RpcEndpoint};
use opclass_core::Error;

const FAILING: &str = "0xdead00000000000000000000000000000000dead";

fn addr(i: u8) -> String {
    format!("0x{:040x}", i)
}

/// Minimal JSON-RPC node: answers `eth_getCode` from a fixed table.
struct MockNode {
    url: String,
    hits: Arc<AtomicUsize>,
}

fn respond(stream: TcpStream, codes: &HashMap<String, String>, hits: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut length = 0usize;
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            line.clear();
            reader.read_line(&mut line).unwrap();
            let header = line.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some((k, v)) = header.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        hits.fetch_add(1, Ordering::SeqCst);
        let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(req["method"], "eth_getCode");
        assert_eq!(req["params"][1], "latest");
        let id = req["id"].clone();
        let address = req["params"][0].as_str().unwrap().to_owned();
        let reply = if address == FAILING {
            serde_json::json!({"jsonrpc": "2.0", "id": id, "error": {"code": -32000, "message": "header not found"}})
        } else {
            let code = codes.get(&address).cloned().unwrap_or_else(|| "0x".into());
            serde_json::json!({"jsonrpc": "2.0", "id": id, "result": code})
        };
        let text = reply.to_string();
        write!(
            out,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{}",
            text.len(),
            text
        )
        .unwrap();
        out.flush().unwrap();
    }
}

impl MockNode {
    fn start(codes: HashMap<String, String>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let codes = Arc::new(codes);
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let codes = codes.clone();
                let counter = counter.clone();
                std::thread::spawn(move || respond(stream, &codes, &counter));
            }
        });
        MockNode { url, hits }
    }

    fn endpoint(&self) -> RpcEndpoint {
        RpcEndpoint {
            timeout: Duration::from_secs(5),
            max_retries: 0,
            ..RpcEndpoint::new(self.url.clone())
        }
    }
}

fn table() -> HashMap<String, String> {
    (1..=12u8).map(|i| (addr(i), format!("0x60{i:02x}00"))).collect()
}

#[test]
fn fetches_code_and_empty_accounts() {
    let node = MockNode::start(table());
    let ep = node.endpoint();
    let code = fetch_code(&ep, &addr(3)).unwrap();
    assert_eq!(code.bytes, vec![0x60, 0x03, 0x00]);
    assert!(code.is_contract());
    let eoa = fetch_code(&ep, &addr(200)).unwrap();
    assert!(!eoa.is_contract());
    assert_eq!(node.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn node_errors_keep_code_and_message() {
    let node = MockNode::start(table());
    match fetch_code(&node.endpoint(), FAILING) {
        Err(Error::RpcError { code, message }) => {
            assert_eq!(code, -32000);
            assert_eq!(message, "header not found");
        }
        other => panic!("expected RpcError, got {other:?}"),
    }
}

#[test]
fn bad_address_never_hits_the_network() {
    let node = MockNode::start(table());
    assert!(matches!(fetch_code(&node.endpoint(), "0x1234"), Err(Error::BadAddress(_))));
    assert_eq!(node.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn unreachable_node_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ep = RpcEndpoint {
        timeout: Duration::from_secs(2),
        max_retries: 1,
        ..RpcEndpoint::new(format!("http://127.0.0.1:{port}"))
    };
    assert!(matches!(fetch_code(&ep, &addr(1)), Err(Error::RpcTransport(_))));
}

#[test]
fn fetch_many_keeps_input_order() {
    let node = MockNode::start(table());
    let mut addresses: Vec<String> = (1..=12u8).rev().map(addr).collect();
    addresses.insert(5, FAILING.to_owned());
    addresses.insert(2, "not-an-address".to_owned());
    for in_flight in [1, 4, 64] {
        let results = fetch_many(&node.endpoint(), &addresses, in_flight);
        assert_eq!(results.len(), addresses.len());
        for (a, r) in addresses.iter().zip(&results) {
            match a.as_str() {
                FAILING => assert!(matches!(r, Err(Error::RpcError { .. }))),
                "not-an-address" => assert!(matches!(r, Err(Error::BadAddress(_)))),
                _ => {
                    let i = u8::from_str_radix(&a[a.len() - 2..], 16).unwrap();
                    assert_eq!(r.as_ref().unwrap().bytes, vec![0x60, i, 0x00]);
                }
            }
        }
    }
}

#[test]
fn normalizes_hex_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("0xAA_Game.hex"), "0x6001\n").unwrap();
    fs::write(dir.path().join("0xbb_Wallet.hex"), "  60016002  ").unwrap();
    fs::write(dir.path().join("0xcc_Finance.hex"), "0x600").unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("corpus.jsonl");
    assert_eq!(normalize_corpus(dir.path(), &out).unwrap(), 2);
    let recs = read_jsonl_records(&out).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].address, "0xaa");
    assert_eq!(recs[0].bytecode, "0x6001");
    assert_eq!(recs[0].category.as_deref(), Some("Game"));
    assert_eq!(recs[1].bytecode, "0x60016002");
    assert_eq!(recs[1].category.as_deref(), Some("Wallet"));
}

#[test]
fn empty_directory_has_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    assert!(matches!(
        normalize_corpus(dir.path(), &out.path().join("c.jsonl")),
        Err(Error::NoRecords)
    ));
}

#[test]
fn normalizing_twice_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.jsonl");
    fs::write(
        &src,
        "{\"address\":\"0xAB\",\"bytecode\":\"6001FE\",\"category\":\"Game\"}\n{\"address\":\"0xcd\",\"bytecode\":\"0x6\",\"category\":\"Game\"}\n",
    )
    .unwrap();
    let once = dir.path().join("once.jsonl");
    let twice = dir.path().join("twice.jsonl");
    assert_eq!(normalize_corpus(&src, &once).unwrap(), 1);
    normalize_corpus(&once, &twice).unwrap();
    assert_eq!(fs::read(&once).unwrap(), fs::read(&twice).unwrap());
    assert_eq!(read_jsonl_records(&once).unwrap()[0].bytecode, "0x6001fe");
}
