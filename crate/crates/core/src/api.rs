//! Request and response types of the batch operations (simulate, sweep,
//! compare, topology generation) together with their synchronous
//! implementations. The HTTP service and the command-line tool both go
//! through these, so a remote call and a local call produce the same bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    compare, run_controller, sweep_static, BaselineError, Comparison, Controller, Fixed, RunOptions, RunReport,
    Script, SweepTable, DEFAULT_DURATION_S,
};
use crate::simengine::{action_for_fraction, SimConfig, SimError, ACTION_FRACTIONS};
use crate::topology::{builtin, parse_topology, random_tree, TopologyError, TopologySpec};

/// A topology given by registry name or as an inline document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyRef {
    Name(String),
    Document(String),
}

/// How the emission rate is set over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Throttle {
    Fraction(f64),
    /// One action index per window; the last one holds after the list ends.
    Actions(Vec<usize>),
}

fn default_duration() -> f64 {
    DEFAULT_DURATION_S
}

fn default_k() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub topology: TopologyRef,
    pub throttle: Throttle,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k_s: f64,
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub report: RunReport,
    pub csv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub topology: TopologyRef,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub table: SweepTable,
    pub best_fraction: f64,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    /// The winner of a static sweep with the same seed and duration.
    BestStatic,
    Fraction(f64),
    Actions(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub topology: TopologyRef,
    pub candidate: Candidate,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub comparison: Comparison,
    pub candidate: RunReport,
    pub baseline: RunReport,
    pub candidate_csv: String,
    pub baseline_csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenTopologyRequest {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub name: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub document: String,
}

impl TopologySummary {
    pub fn of(spec: &TopologySpec) -> Self {
        TopologySummary {
            name: spec.name.clone(),
            n_nodes: spec.components.len(),
            n_edges: spec.links.len(),
            document: spec.to_document(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown topology {0:?}")]
    UnknownTopology(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Run(#[from] BaselineError),
    #[error("{0}")]
    Invalid(String),
}

impl ApiError {
    /// Stable machine-readable code for error responses.
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::UnknownTopology(_) => "unknown_topology",
            ApiError::Topology(_) => "invalid_topology",
            ApiError::Run(_) | ApiError::Invalid(_) => "bad_request",
        }
    }
}

/// JSON body of a failed HTTP request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&ApiError> for ErrorBody {
    fn from(e: &ApiError) -> Self {
        ErrorBody { code: e.code().to_string(), message: e.to_string() }
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        ApiError::Run(e.into())
    }
}

/// Resolves a reference, looking names up with `lookup` and then among the builtins.
pub fn resolve(
    topology: &TopologyRef,
    lookup: impl Fn(&str) -> Option<TopologySpec>,
) -> Result<TopologySpec, ApiError> {
    match topology {
        TopologyRef::Name(name) => lookup(name)
            .or_else(|| builtin(name).ok())
            .ok_or_else(|| ApiError::UnknownTopology(name.clone())),
        TopologyRef::Document(doc) => Ok(parse_topology(doc)?),
    }
}

fn controller(throttle: &Throttle) -> Result<Box<dyn Controller>, ApiError> {
    match throttle {
        Throttle::Fraction(f) => {
            let a = action_for_fraction(*f).ok_or(SimError::BadFraction(*f))?;
            Ok(Box::new(Fixed(a)))
        }
        Throttle::Actions(actions) => {
            if actions.is_empty() {
                return Err(BaselineError::EmptyScript.into());
            }
            if let Some(&bad) = actions.iter().find(|&&a| a >= ACTION_FRACTIONS.len()) {
                return Err(ApiError::Invalid(format!("action {bad} out of range 0..=9")));
            }
            Ok(Box::new(Script(actions.clone())))
        }
    }
}

fn csv_of(report: &RunReport) -> Result<String, ApiError> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn check_duration(duration_s: f64, k_s: f64) -> Result<(), ApiError> {
    if duration_s.is_finite() && duration_s > 0.0 && k_s.is_finite() && k_s > 0.0 {
        Ok(())
    } else {
        Err(BaselineError::BadDuration.into())
    }
}

pub fn simulate(spec: &TopologySpec, req: &SimulateRequest) -> Result<SimulateResponse, ApiError> {
    check_duration(req.duration_s, req.k_s)?;
    let mut ctl = controller(&req.throttle)?;
    let opts = RunOptions { duration_s: req.duration_s, k_s: req.k_s, seed: req.seed };
    let config = SimConfig { trace: req.trace, ..Default::default() };
    let (report, state) = run_controller(spec, opts, config, ctl.as_mut())?;
    let trace = req.trace.then(|| state.format_trace(state.trace().unwrap_or(&[])));
    Ok(SimulateResponse { csv: csv_of(&report)?, report, trace })
}

pub fn sweep(spec: &TopologySpec, req: &SweepRequest) -> Result<SweepResponse, ApiError> {
    check_duration(req.duration_s, 1.0)?;
    let table = sweep_static(spec, req.duration_s, req.seed)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(SweepResponse {
        best_fraction: table.best_fraction(),
        table,
        csv: String::from_utf8(buf).expect("csv output is utf-8"),
    })
}

pub fn compare_runs(spec: &TopologySpec, req: &CompareRequest) -> Result<CompareResponse, ApiError> {
    check_duration(req.duration_s, 1.0)?;
    let opts = RunOptions::new(req.duration_s, req.seed);
    let (candidate, baseline) = match &req.candidate {
        Candidate::BestStatic => {
            let table = sweep_static(spec, req.duration_s, req.seed)?;
            (table.best_report().clone(), table.default_report().clone())
        }
        other => {
            let throttle = match other {
                Candidate::Fraction(f) => Throttle::Fraction(*f),
                Candidate::Actions(a) => Throttle::Actions(a.clone()),
                Candidate::BestStatic => unreachable!(),
            };
            let mut ctl = controller(&throttle)?;
            let (cand, _) = run_controller(spec, opts, SimConfig::default(), ctl.as_mut())?;
            let (base, _) = run_controller(spec, opts, SimConfig::default(), &mut Fixed(ACTION_FRACTIONS.len() - 1))?;
            (cand, base)
        }
    };
    Ok(CompareResponse {
        comparison: compare(&candidate, &baseline)?,
        candidate_csv: csv_of(&candidate)?,
        baseline_csv: csv_of(&baseline)?,
        candidate,
        baseline,
    })
}

pub fn gen_topology(req: &GenTopologyRequest) -> Result<TopologySummary, ApiError> {
    if !(3..=64).contains(&req.n) {
        return Err(ApiError::Invalid(format!("n must be between 3 and 64, got {}", req.n)));
    }
    Ok(TopologySummary::of(&random_tree(req.n, req.seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wct() -> TopologyRef {
        TopologyRef::Name("wct".into())
    }

    #[test]
    fn request_json_shape() {
        let req: SimulateRequest =
            serde_json::from_str(r#"{"topology":{"name":"wct"},"throttle":{"fraction":0.8}}"#).unwrap();
        assert_eq!(req.duration_s, DEFAULT_DURATION_S);
        assert_eq!(req.k_s, 1.0);
        assert_eq!(req.throttle, Throttle::Fraction(0.8));
        let c: CompareRequest =
            serde_json::from_str(r#"{"topology":{"name":"rgt"},"candidate":"best_static","duration_s":5}"#).unwrap();
        assert_eq!(c.candidate, Candidate::BestStatic);
    }

    #[test]
    fn simulate_writes_csv_and_trace() {
        let spec = resolve(&wct(), |_| None).unwrap();
        let req = SimulateRequest {
            topology: wct(),
            throttle: Throttle::Fraction(0.8),
            duration_s: 3.0,
            seed: 1,
            k_s: 1.0,
            trace: true,
        };
        let out = simulate(&spec, &req).unwrap();
        assert_eq!(out.report.thr_series.len(), 3);
        assert!(out.csv.starts_with("window_index,thr,mean_latency,bp_time_total,action\n0,"));
        assert!(out.csv.lines().last().unwrap().starts_with("summary,"));
        let trace = out.trace.unwrap();
        assert_eq!(trace.lines().next().unwrap(), "0 throttle src 7");
        assert!(trace.lines().nth(1).unwrap().ends_with(" generate src 0"));
        assert_eq!(simulate(&spec, &req).unwrap().csv, out.csv);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let spec = builtin("wct").unwrap();
        let mut req = SimulateRequest {
            topology: wct(),
            throttle: Throttle::Fraction(0.85),
            duration_s: 1.0,
            seed: 0,
            k_s: 1.0,
            trace: false,
        };
        assert!(simulate(&spec, &req).is_err());
        req.throttle = Throttle::Actions(vec![]);
        assert!(simulate(&spec, &req).is_err());
        req.throttle = Throttle::Actions(vec![10]);
        assert!(simulate(&spec, &req).is_err());
        req.throttle = Throttle::Fraction(0.5);
        req.duration_s = -1.0;
        assert!(simulate(&spec, &req).is_err());
        assert!(matches!(resolve(&TopologyRef::Name("nope".into()), |_| None), Err(ApiError::UnknownTopology(_))));
        assert!(gen_topology(&GenTopologyRequest { n: 2, seed: 0 }).is_err());
    }

    #[test]
    fn compare_against_default() {
        let spec = builtin("wct").unwrap();
        let req = CompareRequest { topology: wct(), candidate: Candidate::Fraction(1.0), duration_s: 2.0, seed: 0 };
        let out = compare_runs(&spec, &req).unwrap();
        assert_eq!(out.comparison.thr_gain_pct, 0.0);
        assert_eq!(out.candidate_csv, out.baseline_csv);
    }
}
