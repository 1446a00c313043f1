//! The `rcenv/1` line protocol.
//!
//! Every message is one JSON object on one UTF-8 line terminated by `\n`.
//! Requests carry a `type` of `hello`, `reset`, `step` or `close`; responses
//! are `welcome`, `observation` or `error`. Unknown fields are ignored and
//! unknown kinds are rejected with an error response. A line that is not a
//! JSON object is a framing error and ends the session.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::environment::{GraphObservation, N_ACTIONS};
use crate::metrics::{ThroughputReport, EDGE_FEATURES, NODE_FEATURES};
use crate::topology::ComponentKind;

pub const PROTOCOL_VERSION: &str = "rcenv/1";
pub const DEFAULT_PORT: u16 = 7777;
/// Longest accepted request line, in bytes.
pub const MAX_LINE_BYTES: usize = 1 << 20;

/// Per-session environment settings a client may override in `hello`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluctuation_period: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Hello {
        #[serde(default = "default_version")]
        version: String,
        topology: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<SessionOptions>,
    },
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Step {
        action: i64,
    },
    Close,
}

fn default_version() -> String {
    PROTOCOL_VERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireNode {
    pub id: String,
    pub kind: ComponentKind,
    pub features: [f64; NODE_FEATURES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireEdge {
    pub src: usize,
    pub dst: usize,
    pub features: [f64; EDGE_FEATURES],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireInfo {
    pub thr: f64,
    pub mean_latency_s: f64,
    pub bp_time_s: f64,
}

impl From<ThroughputReport> for WireInfo {
    fn from(r: ThroughputReport) -> Self {
        WireInfo { thr: r.thr, mean_latency_s: r.mean_latency, bp_time_s: r.bp_time_total }
    }
}

impl From<WireInfo> for ThroughputReport {
    fn from(w: WireInfo) -> Self {
        ThroughputReport { thr: w.thr, mean_latency: w.mean_latency_s, bp_time_total: w.bp_time_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadState,
    BadAction,
    BadRequest,
    UnknownKind,
    UnknownTopology,
    BadVersion,
    Framing,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Welcome {
        version: String,
        session_id: String,
        topology: String,
        n_nodes: usize,
        n_edges: usize,
        n_actions: usize,
        feature_dim: usize,
        edge_dim: usize,
    },
    Observation {
        nodes: Vec<WireNode>,
        edges: Vec<WireEdge>,
        reward: f64,
        done: bool,
        info: WireInfo,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl Response {
    pub fn welcome(session_id: &str, topology: &str, n_nodes: usize, n_edges: usize) -> Self {
        Response::Welcome {
            version: PROTOCOL_VERSION.to_string(),
            session_id: session_id.to_string(),
            topology: topology.to_string(),
            n_nodes,
            n_edges,
            n_actions: N_ACTIONS,
            feature_dim: NODE_FEATURES,
            edge_dim: EDGE_FEATURES,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Response::Error { code, message: message.into() }
    }

    /// The message as one `\n`-terminated line.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("responses serialize");
        s.push('\n');
        s
    }
}

impl Request {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("requests serialize");
        s.push('\n');
        s
    }
}

pub fn encode_observation(
    obs: &GraphObservation,
    reward: f64,
    done: bool,
    info: ThroughputReport,
) -> Response {
    let nodes = obs
        .node_ids
        .iter()
        .zip(&obs.node_kinds)
        .zip(&obs.node_features)
        .map(|((id, &kind), &features)| WireNode { id: id.clone(), kind, features })
        .collect();
    let edges = obs
        .edges
        .iter()
        .zip(&obs.edge_features)
        .map(|(&(src, dst), &features)| WireEdge { src, dst, features })
        .collect();
    Response::Observation { nodes, edges, reward, done, info: info.into() }
}

/// Inverse of [`encode_observation`]; `None` for other response kinds.
pub fn decode_observation(resp: &Response) -> Option<(GraphObservation, f64, bool, ThroughputReport)> {
    let Response::Observation { nodes, edges, reward, done, info } = resp else {
        return None;
    };
    let obs = GraphObservation {
        node_ids: nodes.iter().map(|n| n.id.clone()).collect(),
        node_kinds: nodes.iter().map(|n| n.kind).collect(),
        node_features: nodes.iter().map(|n| n.features).collect(),
        edges: edges.iter().map(|e| (e.src, e.dst)).collect(),
        edge_features: edges.iter().map(|e| e.features).collect(),
    };
    Some((obs, *reward, *done, (*info).into()))
}

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    /// The line is not a single JSON object; the session cannot continue.
    #[error("malformed framing: {0}")]
    Framing(String),
    #[error("unknown message kind {0:?}")]
    UnknownKind(String),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl WireError {
    pub fn code(&self) -> ErrorCode {
        match self {
            WireError::Framing(_) => ErrorCode::Framing,
            WireError::UnknownKind(_) => ErrorCode::UnknownKind,
            WireError::BadRequest(_) => ErrorCode::BadRequest,
        }
    }
}

const REQUEST_KINDS: [&str; 4] = ["hello", "reset", "step", "close"];

/// Decodes one request line (with or without its trailing newline).
pub fn decode_request(line: &[u8]) -> Result<Request, WireError> {
    let text = std::str::from_utf8(line).map_err(|e| WireError::Framing(e.to_string()))?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    let text = text.strip_suffix('\r').unwrap_or(text);
    if text.contains('\n') {
        return Err(WireError::Framing("embedded newline".into()));
    }
    let value: Value = serde_json::from_str(text).map_err(|e| WireError::Framing(e.to_string()))?;
    let Value::Object(map) = &value else {
        return Err(WireError::Framing("message is not an object".into()));
    };
    let kind = match map.get("type") {
        Some(Value::String(k)) => k.clone(),
        Some(_) => return Err(WireError::BadRequest("field type must be a string".into())),
        None => return Err(WireError::BadRequest("missing field type".into())),
    };
    if !REQUEST_KINDS.contains(&kind.as_str()) {
        return Err(WireError::UnknownKind(kind));
    }
    serde_json::from_value(value).map_err(|e| WireError::BadRequest(e.to_string()))
}

pub fn decode_response(line: &str) -> Result<Response, WireError> {
    let text = line.strip_suffix('\n').unwrap_or(line);
    serde_json::from_str(text).map_err(|e| WireError::Framing(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_decoding() {
        assert_eq!(
            decode_request(br#"{"type":"hello","topology":"wct"}"#).unwrap(),
            Request::Hello { version: PROTOCOL_VERSION.into(), topology: "wct".into(), config: None }
        );
        assert_eq!(decode_request(b"{\"type\":\"step\",\"action\":3,\"extra\":1}\n").unwrap(), Request::Step { action: 3 });
        assert_eq!(decode_request(br#"{"type":"reset"}"#).unwrap(), Request::Reset { seed: None });
        assert_eq!(decode_request(br#"{"type":"close"}"#).unwrap(), Request::Close);
        assert!(matches!(decode_request(br#"{"type":"jump"}"#), Err(WireError::UnknownKind(_))));
        assert!(matches!(decode_request(br#"{"type":"step"}"#), Err(WireError::BadRequest(_))));
        assert!(matches!(decode_request(br#"{"type":"step","action":1.5}"#), Err(WireError::BadRequest(_))));
        assert!(matches!(decode_request(b"[1,2]"), Err(WireError::Framing(_))));
        assert!(matches!(decode_request(b"{nope"), Err(WireError::Framing(_))));
        assert!(matches!(decode_request(&[0xff, 0xfe]), Err(WireError::Framing(_))));
    }

    #[test]
    fn welcome_layout_is_fixed() {
        assert_eq!(
            Response::welcome("s1", "wct", 3, 2).to_line(),
            "{\"type\":\"welcome\",\"version\":\"rcenv/1\",\"session_id\":\"s1\",\"topology\":\"wct\",\
             \"n_nodes\":3,\"n_edges\":2,\"n_actions\":10,\"feature_dim\":8,\"edge_dim\":2}\n"
        );
        assert_eq!(
            Response::error(ErrorCode::BadState, "x").to_line(),
            "{\"type\":\"error\",\"code\":\"bad_state\",\"message\":\"x\"}\n"
        );
    }
}
