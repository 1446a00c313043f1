mod common;

use std::path::PathBuf;
use std::sync::Arc;

use streamrc_client::{ClientError, EnvClient};
use streamrc_core::wire::{decode_response, ErrorCode, Response, MAX_LINE_BYTES};
use streamrc_server::transcript::{record, script};
use streamrc_server::{Outcome, Session, TopologyRegistry};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.transcript"))
}

#[tokio::test(flavor = "multi_thread")]
async fn transcripts_match_golden_files() {
    for name in ["wct", "lspt", "rgt"] {
        let lines = script(name);
        let mut runs = Vec::new();
        for _ in 0..2 {
            let server = common::start(0, false).await;
            runs.push(record(server.line, &lines).await.unwrap());
            server.stop().await;
        }
        let (first, second) = (&runs[0], &runs[1]);
        assert_eq!(first, second, "{name}: two runs differ");
        assert_eq!(first.lines().filter(|l| l.starts_with("< ")).count(), 22);
        let path = golden_path(name);
        if std::env::var_os("STREAMRC_BLESS").is_some() {
            std::fs::write(&path, first).unwrap();
        }
        let golden = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}; rerun with STREAMRC_BLESS=1 to create it", path.display()));
        assert!(&golden == first, "{name}: transcript differs from {}", path.display());
    }
}

/// Replies of an in-process session fed the same lines.
fn in_process(index: u64, base_seed: u64, lines: &[String]) -> Vec<Response> {
    let mut s = Session::new(index, base_seed, Arc::new(TopologyRegistry::with_builtins()));
    lines
        .iter()
        .filter_map(|l| match s.handle_line(l.as_bytes()) {
            Outcome::Reply(r) | Outcome::ReplyAndClose(r) => Some(r),
            Outcome::Close => None,
        })
        .collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions_are_isolated() {
    let server = common::start(11, false).await;
    let scripts: Vec<Vec<String>> = ["wct", "lspt", "rgt"]
        .iter()
        .map(|t| {
            let mut s = script(t);
            // No seed on reset: each session draws from its own index.
            s[1] = r#"{"type":"reset"}"#.to_string();
            s
        })
        .collect();
    // Open all connections first so session indices follow connection order.
    let mut streams = Vec::new();
    for _ in 0..3 {
        let stream = TcpStream::connect(server.line).await.unwrap();
        let mut c = BufReader::new(stream);
        c.get_mut().write_all(b"{\"type\":\"hello\",\"topology\":\"nope\"}\n").await.unwrap();
        let mut reply = String::new();
        c.read_line(&mut reply).await.unwrap();
        streams.push(c);
    }
    let tasks: Vec<_> = streams
        .into_iter()
        .zip(scripts.clone())
        .map(|(mut c, lines)| {
            tokio::spawn(async move {
                let mut replies = Vec::new();
                for line in &lines[..lines.len() - 1] {
                    c.get_mut().write_all(format!("{line}\n").as_bytes()).await.unwrap();
                    let mut reply = String::new();
                    c.read_line(&mut reply).await.unwrap();
                    replies.push(decode_response(&reply).unwrap());
                }
                replies
            })
        })
        .collect();
    for (i, task) in tasks.into_iter().enumerate() {
        let remote = task.await.unwrap();
        let mut local = in_process(i as u64, 11, &scripts[i]);
        assert_eq!(remote, local.drain(..remote.len()).collect::<Vec<_>>(), "session {i}");
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn client_round_trip_and_error_codes() {
    let server = common::start(0, false).await;
    let mut c = EnvClient::connect(server.line).await.unwrap();
    let err = c.step(1).await.unwrap_err();
    assert!(matches!(err, ClientError::Server { code: ErrorCode::BadState, .. }), "{err}");
    let welcome = c.hello("rgt", None).await.unwrap();
    assert_eq!((welcome.n_nodes, welcome.n_actions, welcome.feature_dim, welcome.edge_dim), (10, 10, 8, 2));
    let t = c.reset(Some(5)).await.unwrap();
    assert_eq!(t.observation.node_features.len(), 10);
    let err = c.step(10).await.unwrap_err();
    assert!(matches!(err, ClientError::Server { code: ErrorCode::BadAction, .. }), "{err}");
    let t = c.step(9).await.unwrap();
    assert!(!t.done && (0.0..=1.0).contains(&t.reward));
    let reply = c.exchange_raw(r#"{"type":"dance"}"#).await.unwrap().unwrap();
    assert!(reply.contains(r#""code":"unknown_kind""#), "{reply}");
    c.close().await.unwrap();
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn framing_errors_close_the_connection() {
    let server = common::start(0, false).await;
    let mut c = EnvClient::connect(server.line).await.unwrap();
    let reply = c.exchange_raw("{not json").await.unwrap().unwrap();
    assert!(reply.contains(r#""code":"framing""#), "{reply}");
    assert_eq!(c.exchange_raw(r#"{"type":"close"}"#).await.ok().flatten(), None);

    let mut c = EnvClient::connect(server.line).await.unwrap();
    let huge = format!(r#"{{"type":"hello","topology":"{}"}}"#, "x".repeat(MAX_LINE_BYTES));
    let reply = c.exchange_raw(&huge).await.unwrap().unwrap();
    assert!(reply.contains(r#""code":"framing""#), "{reply}");
    server.stop().await;
}
