//! One protocol session: a state machine from request lines to responses.
//!
//! ```text
//! AwaitingHello --hello--> AwaitingReset --reset--> AwaitingStep --step(done)--> AwaitingReset
//!                                         ^------------reset-------------'
//! any state --close--> Closed
//! ```
//!
//! Errors leave the state unchanged. A line that is not a JSON object ends the
//! session after an error response.

use std::sync::Arc;

use streamrc_core::environment::{derive_seed, EnvConfig, EnvError, Environment};
use streamrc_core::wire::{
    decode_request, encode_observation, ErrorCode, Request, Response, SessionOptions, WireError, PROTOCOL_VERSION,
};

use crate::registry::TopologyRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    AwaitingHello,
    AwaitingReset,
    AwaitingStep,
    Closed,
}

/// What the connection should do after a request.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Reply(Response),
    /// Send the response, then close the connection.
    ReplyAndClose(Response),
    Close,
}

pub struct Session {
    id: String,
    registry: Arc<TopologyRegistry>,
    /// Base for per-episode seeds when `reset` names none.
    seed: u64,
    state: SessionState,
    env: Option<Environment>,
}

impl Session {
    /// Session number `index` of a server started with `base_seed`.
    pub fn new(index: u64, base_seed: u64, registry: Arc<TopologyRegistry>) -> Self {
        Session {
            id: format!("s{index}"),
            registry,
            seed: derive_seed(base_seed, index),
            state: SessionState::AwaitingHello,
            env: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn handle_line(&mut self, line: &[u8]) -> Outcome {
        match decode_request(line) {
            Ok(req) => self.handle(req),
            Err(e @ WireError::Framing(_)) => {
                self.state = SessionState::Closed;
                Outcome::ReplyAndClose(Response::error(e.code(), e.to_string()))
            }
            Err(e) => Outcome::Reply(Response::error(e.code(), e.to_string())),
        }
    }

    pub fn handle(&mut self, req: Request) -> Outcome {
        use SessionState::*;
        let reply = match (self.state, req) {
            (_, Request::Close) => {
                self.state = Closed;
                return Outcome::Close;
            }
            (Closed, _) => return Outcome::Close,
            (AwaitingHello, Request::Hello { version, topology, config }) => self.hello(&version, &topology, config),
            (_, Request::Hello { .. }) => bad_state("hello already received"),
            (AwaitingHello, _) => bad_state("send hello first"),
            (_, Request::Reset { seed }) => self.reset(seed),
            (AwaitingReset, Request::Step { .. }) => bad_state("send reset before step"),
            (AwaitingStep, Request::Step { action }) => self.step(action),
        };
        Outcome::Reply(reply)
    }

    fn hello(&mut self, version: &str, topology: &str, options: Option<SessionOptions>) -> Response {
        if version != PROTOCOL_VERSION {
            return Response::error(
                ErrorCode::BadVersion,
                format!("unsupported version {version:?}; this server speaks {PROTOCOL_VERSION}"),
            );
        }
        let Some(spec) = self.registry.get(topology) else {
            let known: Vec<&str> = self.registry.names().collect();
            return Response::error(
                ErrorCode::UnknownTopology,
                format!("unknown topology {topology:?}; known: {}", known.join(", ")),
            );
        };
        let mut config = EnvConfig { seed: self.seed, ..EnvConfig::default() };
        if let Some(o) = options {
            config.k_s = o.k_s.unwrap_or(config.k_s);
            config.episode_length = o.episode_length.unwrap_or(config.episode_length);
            config.fluctuation_period = o.fluctuation_period.unwrap_or(config.fluctuation_period);
        }
        match Environment::new(spec, config) {
            Ok(env) => {
                let welcome = Response::welcome(&self.id, topology, env.n_nodes(), env.n_edges());
                self.env = Some(env);
                self.state = SessionState::AwaitingReset;
                welcome
            }
            Err(e) => Response::error(ErrorCode::BadRequest, e.to_string()),
        }
    }

    fn reset(&mut self, seed: Option<u64>) -> Response {
        let env = self.env.as_mut().expect("hello creates the environment");
        match env.reset(seed) {
            Ok((obs, info)) => {
                self.state = SessionState::AwaitingStep;
                encode_observation(&obs, 0.0, false, info)
            }
            Err(e) => internal(e),
        }
    }

    fn step(&mut self, action: i64) -> Response {
        let env = self.env.as_mut().expect("hello creates the environment");
        match env.step(action) {
            Ok(r) => {
                if r.done {
                    self.state = SessionState::AwaitingReset;
                }
                encode_observation(&r.observation, r.reward, r.done, r.info)
            }
            Err(EnvError::BadAction(a)) => {
                Response::error(ErrorCode::BadAction, format!("action {a} out of range 0..=9"))
            }
            Err(e) => internal(e),
        }
    }
}

fn bad_state(message: &str) -> Response {
    Response::error(ErrorCode::BadState, message)
}

fn internal(e: EnvError) -> Response {
    Response::error(ErrorCode::Internal, e.to_string())
}
