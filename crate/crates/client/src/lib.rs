//! Thin clients for the two server interfaces: [`EnvClient`] drives one
//! environment session over the `rcenv/1` line protocol and [`ApiClient`]
//! calls the HTTP API.

use serde::de::DeserializeOwned;
use serde::Serialize;
use streamrc_core::api::{
    CompareRequest, CompareResponse, ErrorBody, GenTopologyRequest, SimulateRequest, SimulateResponse, SweepRequest,
    SweepResponse, TopologySummary,
};
use streamrc_core::environment::GraphObservation;
use streamrc_core::metrics::ThroughputReport;
use streamrc_core::wire::{decode_observation, decode_response, ErrorCode, Request, Response, SessionOptions, PROTOCOL_VERSION};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpStream, ToSocketAddrs};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("server closed the connection")]
    Closed,
    #[error("unexpected reply: {0}")]
    Protocol(String),
    #[error("server error {code:?}: {message}")]
    Server { code: ErrorCode, message: String },
    #[error(transparent)]
    Http(#[from] reqwest::Error),
    #[error("HTTP {status}: {code}: {message}")]
    Api { status: u16, code: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Welcome {
    pub session_id: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_actions: usize,
    pub feature_dim: usize,
    pub edge_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: GraphObservation,
    pub reward: f64,
    pub done: bool,
    pub info: ThroughputReport,
}

/// One environment session.
pub struct EnvClient {
    reader: BufReader<OwnedReadHalf>,
    writer: OwnedWriteHalf,
}

impl EnvClient {
    pub async fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let (r, w) = TcpStream::connect(addr).await?.into_split();
        Ok(EnvClient { reader: BufReader::new(r), writer: w })
    }

    /// Sends one raw line (a newline is appended if missing) and returns the
    /// raw reply line, or `None` if the server closed the connection.
    pub async fn exchange_raw(&mut self, line: &str) -> Result<Option<String>, ClientError> {
        self.writer.write_all(line.as_bytes()).await?;
        if !line.ends_with('\n') {
            self.writer.write_all(b"\n").await?;
        }
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply).await?;
        Ok((n > 0).then_some(reply))
    }

    async fn request(&mut self, req: &Request) -> Result<Response, ClientError> {
        let reply = self.exchange_raw(&req.to_line()).await?.ok_or(ClientError::Closed)?;
        match decode_response(&reply).map_err(|e| ClientError::Protocol(e.to_string()))? {
            Response::Error { code, message } => Err(ClientError::Server { code, message }),
            other => Ok(other),
        }
    }

    pub async fn hello(&mut self, topology: &str, options: Option<SessionOptions>) -> Result<Welcome, ClientError> {
        let req = Request::Hello { version: PROTOCOL_VERSION.into(), topology: topology.into(), config: options };
        match self.request(&req).await? {
            Response::Welcome { session_id, n_nodes, n_edges, n_actions, feature_dim, edge_dim, .. } => {
                Ok(Welcome { session_id, n_nodes, n_edges, n_actions, feature_dim, edge_dim })
            }
            other => Err(ClientError::Protocol(format!("{other:?}"))),
        }
    }

    async fn transition(&mut self, req: Request) -> Result<Transition, ClientError> {
        let resp = self.request(&req).await?;
        let (observation, reward, done, info) =
            decode_observation(&resp).ok_or_else(|| ClientError::Protocol(format!("{resp:?}")))?;
        Ok(Transition { observation, reward, done, info })
    }

    pub async fn reset(&mut self, seed: Option<u64>) -> Result<Transition, ClientError> {
        self.transition(Request::Reset { seed }).await
    }

    pub async fn step(&mut self, action: i64) -> Result<Transition, ClientError> {
        self.transition(Request::Step { action }).await
    }

    pub async fn close(mut self) -> Result<(), ClientError> {
        self.writer.write_all(Request::Close.to_line().as_bytes()).await?;
        self.writer.shutdown().await?;
        Ok(())
    }
}

/// Client of the HTTP API rooted at `base_url` (for example `http://127.0.0.1:8080`).
#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    pub fn new(base_url: &str) -> Self {
        ApiClient { base: base_url.trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str::<ErrorBody>(&text)
            .unwrap_or(ErrorBody { code: "http".into(), message: text });
        Err(ClientError::Api { status: status.as_u16(), code: body.code, message: body.message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn healthz(&self) -> Result<serde_json::Value, ClientError> {
        self.get("/healthz").await
    }

    pub async fn topologies(&self) -> Result<Vec<TopologySummary>, ClientError> {
        self.get("/v1/topologies").await
    }

    pub async fn topology(&self, name: &str) -> Result<TopologySummary, ClientError> {
        self.get(&format!("/v1/topologies/{name}")).await
    }

    pub async fn simulate(&self, req: &SimulateRequest) -> Result<SimulateResponse, ClientError> {
        self.post("/v1/simulate", req).await
    }

    pub async fn sweep(&self, req: &SweepRequest) -> Result<SweepResponse, ClientError> {
        self.post("/v1/sweep", req).await
    }

    pub async fn compare(&self, req: &CompareRequest) -> Result<CompareResponse, ClientError> {
        self.post("/v1/compare", req).await
    }

    pub async fn gen_topology(&self, req: &GenTopologyRequest) -> Result<TopologySummary, ClientError> {
        self.post("/v1/gen-topology", req).await
    }
}
