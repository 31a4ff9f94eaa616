mod common;

use common::contract_path;
use equivguard::artifact::{fetch_verified, ArtifactError, Cache, Chain, CompileOptions, ExplorerQuery};
use equivguard::detect::{DetectConfig, Mode};
use equivguard::report::{analyze, AnalyzeOptions, Input, InputDescriptor};
use equivguard::Smell;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

const ADDR: &str = "0x7a250d5630b4cf539739df2c5dacb4c659f2488d";

/// Serves `status` and `body` to every request; returns the base URL and a hit counter.
fn serve(status: &'static str, extra: &'static str, body: String) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/api", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { continue };
            let mut reader = BufReader::new(s.try_clone().unwrap());
            let mut line = String::new();
            while reader.read_line(&mut line).is_ok_and(|n| n > 0) && line != "\r\n" {
                line.clear();
            }
            h.fetch_add(1, Ordering::SeqCst);
            let resp = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\n{extra}Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = s.write_all(resp.as_bytes());
        }
    });
    (url, hits)
}

fn anyswap_payload() -> String {
    let code = std::fs::read_to_string(contract_path("multichain/anyswap_like.sol")).unwrap();
    serde_json::json!({"status": "1", "message": "OK", "result": [{
        "SourceCode": code, "ContractName": "AnyswapLikeERC20",
        "CompilerVersion": "v0.8.26+commit.8a97fa7a", "OptimizationUsed": "0", "Runs": "200",
        "EVMVersion": "Default"}]})
    .to_string()
}

#[test]
fn fetch_hits_network_once_then_cache() {
    let (url, hits) = serve("200 OK", "", anyswap_payload());
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let q = ExplorerQuery::new(Chain::Custom(url), ADDR, Some("key".into())).unwrap();
    let first = fetch_verified(&q, &cache).unwrap();
    assert!(!first.from_cache);
    assert_eq!(first.contract_name, "AnyswapLikeERC20");
    let second = fetch_verified(&q, &cache).unwrap();
    assert!(second.from_cache);
    assert_eq!(second.payload_digest, first.payload_digest);
    assert_eq!(second.sources, first.sources);
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn rate_limit_carries_retry_after() {
    let (url, _) = serve("429 Too Many Requests", "Retry-After: 7\r\n", "{}".into());
    let dir = tempfile::tempdir().unwrap();
    let q = ExplorerQuery::new(Chain::Custom(url), ADDR, None).unwrap();
    let r = fetch_verified(&q, &Cache::new(dir.path()));
    assert!(matches!(r, Err(ArtifactError::RateLimited(Some(7)))), "{r:?}");
}

#[test]
fn unverified_contract_is_reported() {
    let body = serde_json::json!({"status": "1", "message": "OK", "result": [{"SourceCode": "", "ContractName": ""}]});
    let (url, _) = serve("200 OK", "", body.to_string());
    let dir = tempfile::tempdir().unwrap();
    let q = ExplorerQuery::new(Chain::Custom(url), ADDR, None).unwrap();
    assert!(matches!(fetch_verified(&q, &Cache::new(dir.path())), Err(ArtifactError::NotVerified(_))));
}

#[test]
fn explorer_input_is_analyzed_end_to_end() {
    let (url, _) = serve("200 OK", "", anyswap_payload());
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let opts = AnalyzeOptions {
        detect: DetectConfig {
            mode: Mode::StaticOnly,
            ..DetectConfig::default()
        },
        compile: CompileOptions::discover(Some(cache.clone())),
        solc: None,
        cache,
        api_key: None,
    };
    let input = Input::Explorer {
        chain: Chain::Custom(url),
        address: ADDR.into(),
    };
    let r = analyze(&input, &opts).unwrap();
    assert!(matches!(r.input, InputDescriptor::Explorer { .. }));
    let fs: Vec<_> = r.findings().collect();
    assert_eq!(fs.len(), 1);
    assert_eq!(fs[0].smell, Smell::Ccra);
    assert_eq!(fs[0].metadata["hardcoded_chainid"], 122);
    assert_eq!(r.compiler.as_ref().unwrap().version, "0.8.26");
}
