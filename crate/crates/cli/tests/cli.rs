use std::path::Path;
use std::process::{Command, Output};

use streamrc_server::{bind, ServeConfig};

fn streamrc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamrc")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = streamrc(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_reproducible_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--topology", "wct", "--fraction", "1.0", "--duration-s", "20", "--out", "full"]);
    assert!(report(&d.join("full/wct_simulate.json"))["bp_time_total"].as_f64().unwrap() > 0.0);

    ok(d, &["simulate", "--topology", "wct", "--fraction", "0.8", "--duration-s", "20", "--out", "a", "--trace"]);
    ok(d, &["simulate", "--topology", "wct", "--fraction", "0.8", "--duration-s", "20", "--out", "b", "--trace"]);
    let thr = report(&d.join("a/wct_simulate.json"))["thr_mean"].as_f64().unwrap();
    assert!((thr - 6400.0).abs() <= 0.05 * 6400.0, "thr_mean {thr}");
    for f in ["wct_simulate.csv", "wct_simulate.json", "wct_simulate_trace.txt"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(d.join("a/wct_simulate.csv")).unwrap();
    assert!(csv.starts_with("window_index,thr,mean_latency,bp_time_total,action\n0,"));
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn action_scripts_and_topology_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("actions.txt"), "9, 8\n3 3\n").unwrap();
    let doc = ok(d, &["gen-topology", "--n", "6", "--seed", "2"]);
    std::fs::write(d.join("tree.toml"), &doc).unwrap();
    ok(d, &["simulate", "--topology", "tree.toml", "--actions", "actions.txt", "--duration-s", "6"]);
    let name = doc.lines().find_map(|l| l.strip_prefix("name = ")).unwrap().trim_matches('"').to_string();
    let csv = std::fs::read_to_string(d.join(format!("{name}_simulate.csv"))).unwrap();
    let actions: Vec<&str> = csv.lines().skip(1).take(6).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(actions, ["9", "8", "3", "3", "3", "3"]);
}

#[test]
fn bad_inputs_exit_nonzero_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = streamrc(d, &["simulate", "--topology", "missing/topo.toml", "--fraction", "1.0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing/topo.toml"));

    let out = streamrc(d, &["simulate", "--topology", "nosuch", "--fraction", "1.0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nosuch"));

    let out = streamrc(d, &["simulate", "--topology", "wct", "--fraction", "0.25", "--duration-s", "2"]);
    assert!(!out.status.success());

    let out = streamrc(d, &["simulate", "--topology", "wct"]);
    assert!(!out.status.success());

    std::fs::write(d.join("broken.toml"), "[[components]]\nid = 1\n").unwrap();
    let out = streamrc(d, &["sweep", "--topology", "broken.toml", "--duration-s", "1"]);
    assert!(!out.status.success());
}

#[test]
fn gen_topology_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["gen-topology", "--n", "10", "--seed", "7"]);
    let b = ok(dir.path(), &["gen-topology", "--n", "10", "--seed", "7"]);
    assert_eq!(a, b);
    assert_ne!(a, ok(dir.path(), &["gen-topology", "--n", "10", "--seed", "8"]));
    assert_eq!(a.matches("[[links]]").count(), 9);
}

#[test]
fn sweep_table_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(d, &["sweep", "--topology", "rgt", "--duration-s", "10"]);
    assert!(stdout.contains("best fraction"));
    let mut rdr = csv::Reader::from_path(d.join("rgt_sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 10);
    let thr = |r: &csv::StringRecord| r[1].parse::<f64>().unwrap();
    let best = rows.iter().find(|r| &r[4] == "1").unwrap();
    assert!(rows.iter().all(|r| thr(r) <= thr(best)));

    ok(d, &["compare", "--topology", "wct", "--fraction", "0.8", "--duration-s", "10"]);
    let cmp = report(&d.join("wct_compare.json"));
    assert!(cmp["latency_drop_pct"].as_f64().unwrap() > 0.0, "{cmp}");
    assert!(d.join("wct_candidate.csv").exists() && d.join("wct_baseline.csv").exists());
}

#[test]
fn plot_renders_window_and_reward_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--topology", "lspt", "--fraction", "0.9", "--duration-s", "5"]);
    let listed = ok(d, &["plot", "--in", "lspt_simulate.csv", "--out", "charts"]);
    assert_eq!(listed.lines().count(), 2);
    for f in ["lspt_simulate_throughput.svg", "lspt_simulate_latency.svg"] {
        assert!(std::fs::read_to_string(d.join("charts").join(f)).unwrap().starts_with("<svg"));
    }
    std::fs::write(d.join("reward.csv"), "iteration,topology,mean_step_reward\n0,wct,0.4\n1,wct,0.6\n0,rgt,0.3\n1,rgt,0.5\n")
        .unwrap();
    ok(d, &["plot", "--in", "reward.csv"]);
    assert!(d.join("reward_reward.svg").exists());
    std::fs::write(d.join("odd.csv"), "a,b\n1,2\n").unwrap();
    assert!(!streamrc(d, &["plot", "--in", "odd.csv"]).status.success());
}

#[test]
fn remote_mode_matches_local_mode() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let bound = rt
        .block_on(bind(&ServeConfig { port: 0, http_port: Some(0), ..ServeConfig::default() }))
        .unwrap();
    let url = format!("http://{}", bound.http_addr.unwrap());
    rt.spawn(bound.serve(std::future::pending()));

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["simulate", "--topology", "rgt", "--fraction", "0.7", "--duration-s", "8", "--seed", "4"];
    ok(d, &[&args[..], &["--out", "local"]].concat());
    ok(d, &[&args[..], &["--out", "remote", "--remote", &url]].concat());
    for f in ["rgt_simulate.csv", "rgt_simulate.json"] {
        assert_eq!(std::fs::read(d.join("local").join(f)).unwrap(), std::fs::read(d.join("remote").join(f)).unwrap());
    }
    assert_eq!(
        ok(d, &["gen-topology", "--n", "12", "--seed", "3"]),
        ok(d, &["--remote", &url, "gen-topology", "--n", "12", "--seed", "3"])
    );
    let out = streamrc(d, &["--remote", &url, "sweep", "--topology", "mesh", "--duration-s", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_topology"));
}
