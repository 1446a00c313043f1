//! Scripted sessions used for conformance checks: a fixed request script per
//! topology and a driver that records every request and reply line.

use std::net::SocketAddr;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

pub const SCRIPT_SEED: u64 = 20;
pub const SCRIPT_STEPS: usize = 20;

/// hello, reset with a fixed seed, twenty steps sweeping the action range, close.
pub fn script(topology: &str) -> Vec<String> {
    let mut lines = vec![
        format!(r#"{{"type":"hello","version":"rcenv/1","topology":"{topology}","config":{{"k_s":0.1}}}}"#),
        format!(r#"{{"type":"reset","seed":{SCRIPT_SEED}}}"#),
    ];
    lines.extend((0..SCRIPT_STEPS).map(|i| format!(r#"{{"type":"step","action":{}}}"#, (i * 3 + 9) % 10)));
    lines.push(r#"{"type":"close"}"#.to_string());
    lines
}

/// Sends `lines` one at a time and returns the transcript: each request
/// prefixed by `> `, each reply by `< `. The server sends nothing for
/// `close`, so the transcript ends with the request line.
pub async fn record(addr: SocketAddr, lines: &[String]) -> std::io::Result<String> {
    let (r, mut w) = TcpStream::connect(addr).await?.into_split();
    let mut reader = BufReader::new(r);
    let mut out = String::new();
    for line in lines {
        out.push_str("> ");
        out.push_str(line);
        out.push('\n');
        w.write_all(line.as_bytes()).await?;
        w.write_all(b"\n").await?;
        if line.contains(r#""type":"close""#) {
            break;
        }
        let mut reply = String::new();
        if reader.read_line(&mut reply).await? == 0 {
            break;
        }
        out.push_str("< ");
        out.push_str(&reply);
    }
    let mut rest = String::new();
    reader.read_line(&mut rest).await?;
    if !rest.is_empty() {
        return Err(std::io::Error::other(format!("unexpected data after close: {rest:?}")));
    }
    Ok(out)
}
