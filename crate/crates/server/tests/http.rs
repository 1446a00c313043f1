mod common;

use streamrc_client::{ApiClient, ClientError};
use streamrc_core::api::{
    self, Candidate, CompareRequest, GenTopologyRequest, SimulateRequest, SweepRequest, Throttle, TopologyRef,
};
use streamrc_core::topology::builtin;

async fn client() -> (common::Running, ApiClient) {
    let server = common::start(0, true).await;
    let api = ApiClient::new(&format!("http://{}", server.http.unwrap()));
    (server, api)
}

fn name(n: &str) -> TopologyRef {
    TopologyRef::Name(n.into())
}

#[tokio::test(flavor = "multi_thread")]
async fn topology_lookup() {
    let (server, api) = client().await;
    assert_eq!(api.healthz().await.unwrap()["protocol"], "rcenv/1");
    let names: Vec<String> = api.topologies().await.unwrap().into_iter().map(|t| t.name).collect();
    assert_eq!(names, ["lspt", "rgt", "wct"]);
    let rgt = api.topology("rgt").await.unwrap();
    assert_eq!((rgt.n_nodes, rgt.n_edges), (10, 9));
    assert_eq!(rgt.document, builtin("rgt").unwrap().to_document());
    match api.topology("mesh").await.unwrap_err() {
        ClientError::Api { status, code, .. } => assert_eq!((status, code.as_str()), (404, "unknown_topology")),
        e => panic!("{e}"),
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn remote_runs_equal_local_runs() {
    let (server, api) = client().await;
    let spec = builtin("lspt").unwrap();

    let sim = SimulateRequest {
        topology: name("lspt"),
        throttle: Throttle::Actions(vec![9, 4, 6]),
        duration_s: 5.0,
        seed: 3,
        k_s: 1.0,
        trace: false,
    };
    assert_eq!(api.simulate(&sim).await.unwrap(), api::simulate(&spec, &sim).unwrap());

    let sweep = SweepRequest { topology: name("lspt"), duration_s: 3.0, seed: 1 };
    let remote = api.sweep(&sweep).await.unwrap();
    assert_eq!(remote, api::sweep(&spec, &sweep).unwrap());
    assert_eq!(remote.table.rows.len(), 10);

    let cmp = CompareRequest { topology: name("lspt"), candidate: Candidate::BestStatic, duration_s: 3.0, seed: 1 };
    assert_eq!(api.compare(&cmp).await.unwrap(), api::compare_runs(&spec, &cmp).unwrap());

    let gen = GenTopologyRequest { n: 9, seed: 4 };
    let generated = api.gen_topology(&gen).await.unwrap();
    assert_eq!(generated, api::gen_topology(&gen).unwrap());
    let inline = SimulateRequest {
        topology: TopologyRef::Document(generated.document),
        throttle: Throttle::Fraction(0.5),
        duration_s: 2.0,
        ..sim
    };
    assert_eq!(api.simulate(&inline).await.unwrap().report.thr_series.len(), 2);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_requests_get_error_bodies() {
    let (server, api) = client().await;
    let broken = SimulateRequest {
        topology: TopologyRef::Document("[[components]]\nid = \"a\"\n".into()),
        throttle: Throttle::Fraction(1.0),
        duration_s: 1.0,
        seed: 0,
        k_s: 1.0,
        trace: false,
    };
    match api.simulate(&broken).await.unwrap_err() {
        ClientError::Api { status, code, .. } => assert_eq!((status, code.as_str()), (422, "invalid_topology")),
        e => panic!("{e}"),
    }
    let bad_fraction = SimulateRequest { topology: name("wct"), throttle: Throttle::Fraction(0.35), ..broken };
    match api.simulate(&bad_fraction).await.unwrap_err() {
        ClientError::Api { status, code, .. } => assert_eq!((status, code.as_str()), (400, "bad_request")),
        e => panic!("{e}"),
    }
    match api.gen_topology(&GenTopologyRequest { n: 2, seed: 0 }).await.unwrap_err() {
        ClientError::Api { status, .. } => assert_eq!(status, 400),
        e => panic!("{e}"),
    }
    server.stop().await;
}
