//! Stream-processing topologies: sources, operators and sinks wired into a DAG.
//!
//! Topologies are read from and written to a TOML document:
//!
//! ```toml
//! name = "wct"
//! tuple_bytes = 1024
//!
//! [[components]]
//! id = "src"
//! kind = "source"
//! rate = 1000.0
//!
//! [[components]]
//! id = "split"
//! kind = "operator"
//! service_ms = 0.6
//! selectivity = 8.0
//!
//! [[links]]
//! from = "src"
//! to = "split"
//! ```
//!
//! Omitted `queue_capacity`, `bandwidth_bps`, `latency_ms` and `tuple_bytes`
//! take their defaults.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimDuration;

pub const DEFAULT_QUEUE_CAPACITY: usize = 64;
pub const DEFAULT_BANDWIDTH_BPS: f64 = 100_000_000.0;
pub const DEFAULT_LINK_LATENCY: SimDuration = SimDuration::from_micros(500);
pub const DEFAULT_TUPLE_BYTES: u64 = 1024;

pub const BUILTIN_NAMES: [&str; 3] = ["wct", "lspt", "rgt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Source,
    Operator,
    Sink,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Source => "source",
            ComponentKind::Operator => "operator",
            ComponentKind::Sink => "sink",
        }
    }

    /// Position of this kind in a one-hot encoding.
    pub fn index(self) -> usize {
        match self {
            ComponentKind::Source => 0,
            ComponentKind::Operator => 1,
            ComponentKind::Sink => 2,
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind-specific performance profile of a component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// Unthrottled generation rate in tuples per second.
    Source { rate: f64 },
    Operator { service: SimDuration, selectivity: f64 },
    Sink { service: SimDuration },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub id: String,
    pub profile: Profile,
    pub queue_capacity: usize,
}

impl ComponentSpec {
    pub fn source(id: &str, rate: f64) -> Self {
        Self::new(id, Profile::Source { rate })
    }

    pub fn operator(id: &str, service_ms: f64, selectivity: f64) -> Self {
        Self::new(
            id,
            Profile::Operator { service: SimDuration::from_millis_f64(service_ms), selectivity },
        )
    }

    pub fn sink(id: &str, service_ms: f64) -> Self {
        Self::new(id, Profile::Sink { service: SimDuration::from_millis_f64(service_ms) })
    }

    fn new(id: &str, profile: Profile) -> Self {
        ComponentSpec { id: id.to_string(), profile, queue_capacity: DEFAULT_QUEUE_CAPACITY }
    }

    pub fn kind(&self) -> ComponentKind {
        match self.profile {
            Profile::Source { .. } => ComponentKind::Source,
            Profile::Operator { .. } => ComponentKind::Operator,
            Profile::Sink { .. } => ComponentKind::Sink,
        }
    }

    pub fn generation_rate(&self) -> Option<f64> {
        match self.profile {
            Profile::Source { rate } => Some(rate),
            _ => None,
        }
    }

    pub fn service_time(&self) -> Option<SimDuration> {
        match self.profile {
            Profile::Operator { service, .. } | Profile::Sink { service } => Some(service),
            Profile::Source { .. } => None,
        }
    }

    pub fn selectivity(&self) -> Option<f64> {
        match self.profile {
            Profile::Operator { selectivity, .. } => Some(selectivity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub bandwidth_bps: f64,
    pub latency: SimDuration,
}

impl LinkSpec {
    pub fn new(from: &str, to: &str) -> Self {
        LinkSpec {
            from: from.to_string(),
            to: to.to_string(),
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            latency: DEFAULT_LINK_LATENCY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub name: String,
    pub components: Vec<ComponentSpec>,
    pub links: Vec<LinkSpec>,
    /// Payload size used for link transfer times.
    pub tuple_bytes: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid topology: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown builtin topology {0:?} (expected one of wct, lspt, rgt)")]
    UnknownBuiltin(String),
    #[error("unknown component {0:?}")]
    UnknownComponent(String),
    #[error("cycle detected among components: {}", .0.join(", "))]
    Cycle(Vec<String>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A broken topology invariant, naming the offending components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    NoSource,
    DuplicateId(String),
    BadRate(String),
    BadServiceTime(String),
    BadSelectivity(String),
    ZeroCapacity(String),
    ZeroTupleSize,
    MisplacedField { id: String, field: &'static str },
    MissingField { id: String, field: &'static str },
    SelfLoop(String),
    UnknownEndpoint { from: String, to: String },
    DuplicateLink { from: String, to: String },
    BadBandwidth { from: String, to: String },
    BadLatency { from: String, to: String },
    Cycle(Vec<String>),
    SourceHasIncoming(String),
    SinkHasOutgoing(String),
    OperatorWithoutInput(String),
    OperatorWithoutOutput(String),
    Unreachable(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "topology has no components"),
            Violation::NoSource => write!(f, "topology has no source"),
            Violation::DuplicateId(id) => write!(f, "duplicate component id: {id}"),
            Violation::BadRate(id) => write!(f, "source rate must be positive: {id}"),
            Violation::BadServiceTime(id) => write!(f, "service time must be positive: {id}"),
            Violation::BadSelectivity(id) => {
                write!(f, "selectivity must be finite and non-negative: {id}")
            }
            Violation::ZeroCapacity(id) => write!(f, "queue capacity must be at least 1: {id}"),
            Violation::ZeroTupleSize => write!(f, "tuple size must be positive"),
            Violation::MisplacedField { id, field } => {
                write!(f, "field {field} not allowed for this kind: {id}")
            }
            Violation::MissingField { id, field } => write!(f, "missing field {field}: {id}"),
            Violation::SelfLoop(id) => write!(f, "link from a component to itself: {id}"),
            Violation::UnknownEndpoint { from, to } => {
                write!(f, "link endpoint does not exist: {from}->{to}")
            }
            Violation::DuplicateLink { from, to } => write!(f, "duplicate link: {from}->{to}"),
            Violation::BadBandwidth { from, to } => {
                write!(f, "link bandwidth must be positive: {from}->{to}")
            }
            Violation::BadLatency { from, to } => {
                write!(f, "link latency must be non-negative: {from}->{to}")
            }
            Violation::Cycle(ids) => write!(f, "cycle through: {}", ids.join(", ")),
            Violation::SourceHasIncoming(id) => write!(f, "source has incoming link: {id}"),
            Violation::SinkHasOutgoing(id) => write!(f, "sink has outgoing link: {id}"),
            Violation::OperatorWithoutInput(id) => write!(f, "operator has no incoming link: {id}"),
            Violation::OperatorWithoutOutput(id) => {
                write!(f, "operator has no outgoing link: {id}")
            }
            Violation::Unreachable(id) => write!(f, "unreachable: {id}"),
        }
    }
}

impl TopologySpec {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    pub fn component(&self, id: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn tuple_bits(&self) -> u64 {
        self.tuple_bytes * 8
    }

    /// Outgoing link indices per component index.
    pub fn out_links(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.components.len()];
        for (li, l) in self.links.iter().enumerate() {
            if let Some(i) = self.index_of(&l.from) {
                out[i].push(li);
            }
        }
        out
    }

    /// Incoming link indices per component index.
    pub fn in_links(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.components.len()];
        for (li, l) in self.links.iter().enumerate() {
            if let Some(i) = self.index_of(&l.to) {
                inc[i].push(li);
            }
        }
        inc
    }

    /// Every component with a directed path to `id`, sources included.
    pub fn upstream_closure(&self, id: &str) -> Result<BTreeSet<String>, TopologyError> {
        if self.index_of(id).is_none() {
            return Err(TopologyError::UnknownComponent(id.to_string()));
        }
        let mut preds: HashMap<&str, Vec<&str>> = HashMap::new();
        for l in &self.links {
            preds.entry(l.to.as_str()).or_default().push(l.from.as_str());
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for &p in preds.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(p.to_string()) {
                    stack.push(p);
                }
            }
        }
        Ok(seen)
    }

    /// Direct predecessors of `id`.
    pub fn direct_upstream(&self, id: &str) -> Result<BTreeSet<String>, TopologyError> {
        if self.index_of(id).is_none() {
            return Err(TopologyError::UnknownComponent(id.to_string()));
        }
        Ok(self.links.iter().filter(|l| l.to == id).map(|l| l.from.clone()).collect())
    }

    /// Component ids in a deterministic topological order (Kahn's algorithm,
    /// ties broken by lexicographic id).
    pub fn topological_order(&self) -> Result<Vec<String>, TopologyError> {
        let mut indegree: BTreeMap<&str, usize> =
            self.components.iter().map(|c| (c.id.as_str(), 0)).collect();
        let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
        for l in &self.links {
            if let Some(d) = indegree.get_mut(l.to.as_str()) {
                *d += 1;
            }
            succ.entry(l.from.as_str()).or_default().push(l.to.as_str());
        }
        let mut ready: BTreeSet<&str> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
        let mut order = Vec::with_capacity(self.components.len());
        while let Some(&next) = ready.iter().next() {
            ready.remove(next);
            order.push(next.to_string());
            for &s in succ.get(next).map(Vec::as_slice).unwrap_or(&[]) {
                if let Some(d) = indegree.get_mut(s) {
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(s);
                    }
                }
            }
        }
        if order.len() < indegree.len() {
            let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
            let rest = indegree
                .keys()
                .filter(|id| !placed.contains(*id))
                .map(|s| s.to_string())
                .collect();
            return Err(TopologyError::Cycle(rest));
        }
        Ok(order)
    }

    /// Returns the spec if it validates, otherwise all violations.
    pub fn validated(self) -> Result<Self, TopologyError> {
        let v = validate(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(TopologyError::Invalid(v))
        }
    }

    pub fn to_document(&self) -> String {
        let doc = TopologyDoc::from(self);
        toml::to_string(&doc).expect("topology document serializes")
    }
}

/// Checks every topology invariant. An empty list means the spec is valid.
pub fn validate(spec: &TopologySpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.components.is_empty() {
        out.push(Violation::Empty);
        return out;
    }
    if spec.tuple_bytes == 0 {
        out.push(Violation::ZeroTupleSize);
    }

    let mut ids = BTreeSet::new();
    for c in &spec.components {
        if !ids.insert(c.id.as_str()) {
            out.push(Violation::DuplicateId(c.id.clone()));
        }
        if c.queue_capacity == 0 {
            out.push(Violation::ZeroCapacity(c.id.clone()));
        }
        match c.profile {
            Profile::Source { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    out.push(Violation::BadRate(c.id.clone()));
                }
            }
            Profile::Operator { service, selectivity } => {
                if service == SimDuration::ZERO {
                    out.push(Violation::BadServiceTime(c.id.clone()));
                }
                if !(selectivity.is_finite() && selectivity >= 0.0) {
                    out.push(Violation::BadSelectivity(c.id.clone()));
                }
            }
            Profile::Sink { service } => {
                if service == SimDuration::ZERO {
                    out.push(Violation::BadServiceTime(c.id.clone()));
                }
            }
        }
    }
    if !spec.components.iter().any(|c| c.kind() == ComponentKind::Source) {
        out.push(Violation::NoSource);
    }

    let mut seen_links = BTreeSet::new();
    let mut links_ok = true;
    for l in &spec.links {
        if l.from == l.to {
            out.push(Violation::SelfLoop(l.from.clone()));
            links_ok = false;
        }
        if !ids.contains(l.from.as_str()) || !ids.contains(l.to.as_str()) {
            out.push(Violation::UnknownEndpoint { from: l.from.clone(), to: l.to.clone() });
            links_ok = false;
        }
        if !seen_links.insert((l.from.as_str(), l.to.as_str())) {
            out.push(Violation::DuplicateLink { from: l.from.clone(), to: l.to.clone() });
        }
        if !(l.bandwidth_bps.is_finite() && l.bandwidth_bps > 0.0) {
            out.push(Violation::BadBandwidth { from: l.from.clone(), to: l.to.clone() });
        }
    }

    for c in &spec.components {
        let has_in = spec.links.iter().any(|l| l.to == c.id);
        let has_out = spec.links.iter().any(|l| l.from == c.id);
        match c.kind() {
            ComponentKind::Source if has_in => {
                out.push(Violation::SourceHasIncoming(c.id.clone()))
            }
            ComponentKind::Sink if has_out => out.push(Violation::SinkHasOutgoing(c.id.clone())),
            ComponentKind::Operator => {
                if !has_in {
                    out.push(Violation::OperatorWithoutInput(c.id.clone()));
                }
                if !has_out {
                    out.push(Violation::OperatorWithoutOutput(c.id.clone()));
                }
            }
            _ => {}
        }
    }

    if links_ok {
        if let Err(TopologyError::Cycle(ids)) = spec.topological_order() {
            out.push(Violation::Cycle(ids));
        }
    }

    // Reachability from the sources.
    let mut reached: BTreeSet<&str> = spec
        .components
        .iter()
        .filter(|c| c.kind() == ComponentKind::Source)
        .map(|c| c.id.as_str())
        .collect();
    let mut frontier: VecDeque<&str> = reached.iter().copied().collect();
    while let Some(n) = frontier.pop_front() {
        for l in spec.links.iter().filter(|l| l.from == n) {
            if reached.insert(l.to.as_str()) {
                frontier.push_back(l.to.as_str());
            }
        }
    }
    for c in &spec.components {
        if !reached.contains(c.id.as_str()) {
            out.push(Violation::Unreachable(c.id.clone()));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Document format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tuple_bytes: Option<u64>,
    #[serde(default)]
    components: Vec<ComponentDoc>,
    #[serde(default)]
    links: Vec<LinkDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    id: String,
    kind: ComponentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    service_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selectivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    queue_capacity: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latency_ms: Option<f64>,
}

impl From<&TopologySpec> for TopologyDoc {
    fn from(spec: &TopologySpec) -> Self {
        let components = spec
            .components
            .iter()
            .map(|c| {
                let (rate, service_ms, selectivity) = match c.profile {
                    Profile::Source { rate } => (Some(rate), None, None),
                    Profile::Operator { service, selectivity } => {
                        (None, Some(service.as_millis_f64()), Some(selectivity))
                    }
                    Profile::Sink { service } => (None, Some(service.as_millis_f64()), None),
                };
                ComponentDoc {
                    id: c.id.clone(),
                    kind: c.kind(),
                    rate,
                    service_ms,
                    selectivity,
                    queue_capacity: Some(c.queue_capacity as i64),
                }
            })
            .collect();
        let links = spec
            .links
            .iter()
            .map(|l| LinkDoc {
                from: l.from.clone(),
                to: l.to.clone(),
                bandwidth_bps: Some(l.bandwidth_bps),
                latency_ms: Some(l.latency.as_millis_f64()),
            })
            .collect();
        TopologyDoc {
            name: spec.name.clone(),
            tuple_bytes: Some(spec.tuple_bytes),
            components,
            links,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rsplit('\n').next().map(|s| s.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

/// Parses and validates a topology document.
pub fn parse_topology(document: &str) -> Result<TopologySpec, TopologyError> {
    let doc: TopologyDoc = toml::from_str(document).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(document, s.start)).unwrap_or((0, 0));
        TopologyError::Syntax { line, column, message: e.message().to_string() }
    })?;

    let mut violations = Vec::new();
    let mut components = Vec::with_capacity(doc.components.len());
    for c in doc.components {
        let mut check_absent = |present: bool, field: &'static str| {
            if present {
                violations.push(Violation::MisplacedField { id: c.id.clone(), field });
            }
        };
        let profile = match c.kind {
            ComponentKind::Source => {
                check_absent(c.service_ms.is_some(), "service_ms");
                check_absent(c.selectivity.is_some(), "selectivity");
                Profile::Source { rate: c.rate.unwrap_or(0.0) }
            }
            ComponentKind::Operator => {
                check_absent(c.rate.is_some(), "rate");
                Profile::Operator {
                    service: SimDuration::from_millis_f64(c.service_ms.unwrap_or(0.0)),
                    selectivity: c.selectivity.unwrap_or(1.0),
                }
            }
            ComponentKind::Sink => {
                check_absent(c.rate.is_some(), "rate");
                check_absent(c.selectivity.is_some(), "selectivity");
                Profile::Sink { service: SimDuration::from_millis_f64(c.service_ms.unwrap_or(0.0)) }
            }
        };
        if c.kind == ComponentKind::Source && c.rate.is_none() {
            violations.push(Violation::MissingField { id: c.id.clone(), field: "rate" });
        }
        if c.kind != ComponentKind::Source && c.service_ms.is_none() {
            violations.push(Violation::MissingField { id: c.id.clone(), field: "service_ms" });
        }
        if matches!(c.service_ms, Some(ms) if !(ms.is_finite() && ms > 0.0)) {
            violations.push(Violation::BadServiceTime(c.id.clone()));
        }
        let queue_capacity = match c.queue_capacity {
            None => DEFAULT_QUEUE_CAPACITY,
            Some(q) if q >= 1 => q as usize,
            Some(_) => {
                violations.push(Violation::ZeroCapacity(c.id.clone()));
                1
            }
        };
        components.push(ComponentSpec { id: c.id, profile, queue_capacity });
    }

    let mut links = Vec::with_capacity(doc.links.len());
    for l in doc.links {
        let latency = match l.latency_ms {
            None => DEFAULT_LINK_LATENCY,
            Some(ms) if ms.is_finite() && ms >= 0.0 => SimDuration::from_millis_f64(ms),
            Some(_) => {
                violations.push(Violation::BadLatency { from: l.from.clone(), to: l.to.clone() });
                SimDuration::ZERO
            }
        };
        links.push(LinkSpec {
            from: l.from,
            to: l.to,
            bandwidth_bps: l.bandwidth_bps.unwrap_or(DEFAULT_BANDWIDTH_BPS),
            latency,
        });
    }

    let spec = TopologySpec {
        name: doc.name,
        components,
        links,
        tuple_bytes: doc.tuple_bytes.unwrap_or(DEFAULT_TUPLE_BYTES),
    };
    violations.extend(validate(&spec));
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(TopologyError::Invalid(violations))
    }
}

// ---------------------------------------------------------------------------
// Built-in topologies

/// One of the three reference topologies with its default service profile.
pub fn builtin(name: &str) -> Result<TopologySpec, TopologyError> {
    let spec = match name {
        "wct" => TopologySpec {
            name: "wct".into(),
            components: vec![
                ComponentSpec::source("src", 1000.0),
                ComponentSpec::operator("split", 0.6, 8.0),
                ComponentSpec::sink("count", 0.15),
            ],
            links: vec![LinkSpec::new("src", "split"), LinkSpec::new("split", "count")],
            tuple_bytes: DEFAULT_TUPLE_BYTES,
        },
        "lspt" => TopologySpec {
            name: "lspt".into(),
            components: vec![
                ComponentSpec::source("src", 2000.0),
                ComponentSpec::operator("rule", 0.3, 1.0),
                ComponentSpec::operator("indexing", 0.55, 1.0),
                ComponentSpec::operator("counting", 0.4, 1.0),
                ComponentSpec::sink("sink1", 0.05),
                ComponentSpec::sink("sink2", 0.05),
            ],
            links: vec![
                LinkSpec::new("src", "rule"),
                LinkSpec::new("rule", "indexing"),
                LinkSpec::new("rule", "counting"),
                LinkSpec::new("indexing", "sink1"),
                LinkSpec::new("counting", "sink2"),
            ],
            tuple_bytes: DEFAULT_TUPLE_BYTES,
        },
        "rgt" => TopologySpec {
            name: "rgt".into(),
            components: vec![
                ComponentSpec::source("src", 1500.0),
                ComponentSpec::operator("op1", 0.3, 1.0),
                ComponentSpec::operator("op2", 0.4, 1.0),
                ComponentSpec::operator("op3", 0.3, 1.0),
                ComponentSpec::operator("op4", 0.5, 1.0),
                ComponentSpec::operator("op5", 0.9, 1.0),
                ComponentSpec::operator("op6", 0.5, 1.0),
                ComponentSpec::sink("sk1", 0.05),
                ComponentSpec::sink("sk2", 0.05),
                ComponentSpec::sink("sk3", 0.05),
            ],
            links: vec![
                LinkSpec::new("src", "op1"),
                LinkSpec::new("op1", "op2"),
                LinkSpec::new("op1", "op3"),
                LinkSpec::new("op2", "op4"),
                LinkSpec::new("op3", "op5"),
                LinkSpec::new("op3", "op6"),
                LinkSpec::new("op4", "sk1"),
                LinkSpec::new("op5", "sk2"),
                LinkSpec::new("op6", "sk3"),
            ],
            tuple_bytes: DEFAULT_TUPLE_BYTES,
        },
        other => return Err(TopologyError::UnknownBuiltin(other.to_string())),
    };
    Ok(spec)
}

/// Seeded random tree topology with `n` components: one source at the root,
/// operators at internal nodes and sinks at the leaves.
///
/// `n` is clamped to at least 3 so that the tree always contains an operator.
pub fn random_tree(n: usize, seed: u64) -> TopologySpec {
    let n = n.max(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // parent[i] for i >= 2; node 1 is the single child of the source so that
    // the root never feeds a sink directly.
    let mut parent = vec![0usize; n];
    for (i, p) in parent.iter_mut().enumerate().skip(2) {
        *p = rng.random_range(1..i);
    }
    let mut children = vec![Vec::new(); n];
    for i in 1..n {
        children[parent[i]].push(i);
    }

    // Breadth-first naming keeps ids stable and readable.
    let mut names = vec![String::new(); n];
    let (mut ops, mut sinks) = (0, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        names[v] = if v == 0 {
            "src".to_string()
        } else if children[v].is_empty() {
            sinks += 1;
            format!("sk{sinks}")
        } else {
            ops += 1;
            format!("op{ops}")
        };
        queue.extend(children[v].iter().copied());
    }

    let rate = (rng.random_range(5..=20) * 100) as f64;
    let mut components = Vec::with_capacity(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (v != 0, children[v].is_empty(), names[v].len(), names[v].clone()));
    for v in order {
        let c = if v == 0 {
            ComponentSpec::source(&names[v], rate)
        } else if children[v].is_empty() {
            ComponentSpec::sink(&names[v], 0.05)
        } else {
            let service_ms = rng.random_range(2..=10) as f64 / 10.0;
            ComponentSpec::operator(&names[v], service_ms, 1.0)
        };
        components.push(c);
    }
    let mut links: Vec<LinkSpec> =
        (1..n).map(|i| LinkSpec::new(&names[parent[i]], &names[i])).collect();
    links.sort_by(|a, b| (a.from.len(), &a.from, a.to.len(), &a.to).cmp(&(b.from.len(), &b.from, b.to.len(), &b.to)));

    TopologySpec { name: format!("tree{n}-{seed}"), components, links, tuple_bytes: DEFAULT_TUPLE_BYTES }
}
