//! TCP transport for the line protocol: one session per connection.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use streamrc_core::wire::{ErrorCode, Response, MAX_LINE_BYTES};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

use crate::registry::TopologyRegistry;
use crate::session::{Outcome, Session};

/// Hands out session numbers; seeds derive from (number, base seed).
pub struct LineServer {
    registry: Arc<TopologyRegistry>,
    base_seed: u64,
    sessions: AtomicU64,
}

impl LineServer {
    pub fn new(registry: Arc<TopologyRegistry>, base_seed: u64) -> Self {
        LineServer { registry, base_seed, sessions: AtomicU64::new(0) }
    }

    fn next_session(&self) -> Session {
        let index = self.sessions.fetch_add(1, Ordering::Relaxed);
        Session::new(index, self.base_seed, self.registry.clone())
    }

    /// Accepts connections until the listener fails.
    pub async fn serve(self: Arc<Self>, listener: TcpListener) -> std::io::Result<()> {
        loop {
            let (stream, peer) = listener.accept().await?;
            let session = self.next_session();
            tracing::info!(session = session.id(), %peer, "session opened");
            tokio::spawn(async move {
                let id = session.id().to_string();
                if let Err(e) = run_session(stream, session).await {
                    tracing::warn!(session = %id, error = %e, "session ended with an i/o error");
                } else {
                    tracing::info!(session = %id, "session closed");
                }
            });
        }
    }
}

async fn run_session(stream: TcpStream, mut session: Session) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = (&mut reader).take(MAX_LINE_BYTES as u64 + 1).read_until(b'\n', &mut line).await?;
        if n == 0 {
            return Ok(());
        }
        if line.last() != Some(&b'\n') {
            // Either the peer hung up mid-line or the line is too long.
            if n > MAX_LINE_BYTES {
                let r = Response::error(ErrorCode::Framing, format!("line longer than {MAX_LINE_BYTES} bytes"));
                write.write_all(r.to_line().as_bytes()).await?;
            }
            return Ok(());
        }
        // Environment steps are CPU-bound; keep them off the async workers.
        let request = std::mem::take(&mut line);
        let (s, outcome, request) = tokio::task::spawn_blocking(move || {
            let outcome = session.handle_line(&request);
            (session, outcome, request)
        })
        .await
        .map_err(std::io::Error::other)?;
        session = s;
        line = request;
        match outcome {
            Outcome::Reply(r) => write.write_all(r.to_line().as_bytes()).await?,
            Outcome::ReplyAndClose(r) => {
                write.write_all(r.to_line().as_bytes()).await?;
                return write.shutdown().await;
            }
            Outcome::Close => return write.shutdown().await,
        }
    }
}
