//! JSON-over-HTTP API for batch runs and topology lookup.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use streamrc_core::api::{
    self, ApiError, CompareRequest, ErrorBody, GenTopologyRequest, SimulateRequest, SweepRequest, TopologyRef,
    TopologySummary,
};
use streamrc_core::topology::TopologySpec;
use streamrc_core::wire::PROTOCOL_VERSION;

use crate::registry::TopologyRegistry;

#[derive(Clone)]
struct AppState {
    registry: Arc<TopologyRegistry>,
}

pub fn router(registry: Arc<TopologyRegistry>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/topologies", get(list_topologies))
        .route("/v1/topologies/{name}", get(get_topology))
        .route("/v1/simulate", post(simulate))
        .route("/v1/sweep", post(sweep))
        .route("/v1/compare", post(compare))
        .route("/v1/gen-topology", post(gen_topology))
        .with_state(AppState { registry })
}

struct Failure(ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let status = match self.0 {
            ApiError::UnknownTopology(_) => StatusCode::NOT_FOUND,
            ApiError::Topology(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Run(_) | ApiError::Invalid(_) => StatusCode::BAD_REQUEST,
        };
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure(e)
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    protocol: &'static str,
}

async fn healthz() -> Json<Health> {
    Json(Health { status: "ok", protocol: PROTOCOL_VERSION })
}

async fn list_topologies(State(st): State<AppState>) -> Json<Vec<TopologySummary>> {
    Json(st.registry.iter().map(TopologySummary::of).collect())
}

async fn get_topology(State(st): State<AppState>, Path(name): Path<String>) -> Result<Json<TopologySummary>, Failure> {
    let spec = st.registry.get(&name).ok_or(ApiError::UnknownTopology(name))?;
    Ok(Json(TopologySummary::of(&spec)))
}

fn resolve(st: &AppState, topology: &TopologyRef) -> Result<TopologySpec, ApiError> {
    api::resolve(topology, |name| st.registry.get(name).map(|s| s.as_ref().clone()))
}

/// Runs a simulation job on the blocking pool.
async fn blocking<T, F>(job: F) -> Result<Json<T>, Failure>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(job).await {
        Ok(result) => Ok(Json(result?)),
        Err(e) => Err(ApiError::Invalid(format!("job failed: {e}")).into()),
    }
}

async fn simulate(State(st): State<AppState>, Json(req): Json<SimulateRequest>) -> Result<Json<api::SimulateResponse>, Failure> {
    let spec = resolve(&st, &req.topology)?;
    blocking(move || api::simulate(&spec, &req)).await
}

async fn sweep(State(st): State<AppState>, Json(req): Json<SweepRequest>) -> Result<Json<api::SweepResponse>, Failure> {
    let spec = resolve(&st, &req.topology)?;
    blocking(move || api::sweep(&spec, &req)).await
}

async fn compare(State(st): State<AppState>, Json(req): Json<CompareRequest>) -> Result<Json<api::CompareResponse>, Failure> {
    let spec = resolve(&st, &req.topology)?;
    blocking(move || api::compare_runs(&spec, &req)).await
}

async fn gen_topology(Json(req): Json<GenTopologyRequest>) -> Result<Json<TopologySummary>, Failure> {
    Ok(Json(api::gen_topology(&req)?))
}
