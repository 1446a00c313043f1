use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use streamrc_client::ApiClient;
use streamrc_core::api::{
    self, Candidate, CompareRequest, CompareResponse, GenTopologyRequest, SimulateRequest, SimulateResponse,
    SweepRequest, SweepResponse, Throttle, TopologyRef, TopologySummary,
};
use streamrc_core::simengine::ACTION_FRACTIONS;

use crate::args::{Cli, Command, CompareArgs, GenArgs, RunArgs, ServeArgs, SimulateArgs};

/// Where batch jobs run.
enum Backend {
    Local,
    Remote { api: ApiClient, rt: tokio::runtime::Runtime },
}

impl Backend {
    fn new(remote: Option<String>) -> Result<Self> {
        Ok(match remote {
            None => Backend::Local,
            Some(url) => Backend::Remote { api: ApiClient::new(&url), rt: runtime()? },
        })
    }

    fn simulate(&self, req: &SimulateRequest) -> Result<SimulateResponse> {
        match self {
            Backend::Local => Ok(api::simulate(&local_spec(&req.topology)?, req)?),
            Backend::Remote { api, rt } => Ok(rt.block_on(api.simulate(req))?),
        }
    }

    fn sweep(&self, req: &SweepRequest) -> Result<SweepResponse> {
        match self {
            Backend::Local => Ok(api::sweep(&local_spec(&req.topology)?, req)?),
            Backend::Remote { api, rt } => Ok(rt.block_on(api.sweep(req))?),
        }
    }

    fn compare(&self, req: &CompareRequest) -> Result<CompareResponse> {
        match self {
            Backend::Local => Ok(api::compare_runs(&local_spec(&req.topology)?, req)?),
            Backend::Remote { api, rt } => Ok(rt.block_on(api.compare(req))?),
        }
    }

    fn gen_topology(&self, req: &GenTopologyRequest) -> Result<TopologySummary> {
        match self {
            Backend::Local => Ok(api::gen_topology(req)?),
            Backend::Remote { api, rt } => Ok(rt.block_on(api.gen_topology(req))?),
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn local_spec(topology: &TopologyRef) -> Result<streamrc_core::TopologySpec> {
    Ok(api::resolve(topology, |_| None)?)
}

/// A name unless the argument looks like or is an existing file.
fn topology_ref(arg: &str) -> Result<TopologyRef> {
    let path = Path::new(arg);
    if path.exists() || arg.ends_with(".toml") || arg.contains(std::path::MAIN_SEPARATOR) || arg.contains('/') {
        let doc = fs::read_to_string(path).with_context(|| format!("cannot read topology file {}", path.display()))?;
        Ok(TopologyRef::Document(doc))
    } else {
        Ok(TopologyRef::Name(arg.to_string()))
    }
}

fn read_actions(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read action file {}", path.display()))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .with_context(|| format!("{}: {s:?} is not an action index", path.display()))
        })
        .collect()
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn run(cli: Cli) -> Result<()> {
    let backend = || Backend::new(cli.remote.clone());
    match cli.command {
        Command::Simulate(a) => simulate(&backend()?, a),
        Command::Sweep(a) => sweep(&backend()?, a),
        Command::Compare(a) => compare(&backend()?, a),
        Command::GenTopology(a) => gen_topology(&backend()?, a),
        Command::Serve(a) => {
            if cli.remote.is_some() {
                bail!("serve runs locally; drop --remote");
            }
            serve(a)
        }
        Command::Plot(a) => {
            for path in crate::plot::plot(&a.input, a.out.as_deref())? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn simulate(backend: &Backend, a: SimulateArgs) -> Result<()> {
    let throttle = match (&a.fraction, &a.actions) {
        (Some(f), _) => Throttle::Fraction(*f),
        (None, Some(path)) => Throttle::Actions(read_actions(path)?),
        (None, None) => bail!("give --fraction or --actions"),
    };
    let req = SimulateRequest {
        topology: topology_ref(&a.run.topology)?,
        throttle,
        duration_s: a.run.duration_s,
        seed: a.run.seed,
        k_s: a.k_s,
        trace: a.trace,
    };
    let resp = backend.simulate(&req)?;
    let stem = format!("{}_simulate", resp.report.topology);
    let csv = write(&a.run.out, &format!("{stem}.csv"), &resp.csv)?;
    let summary = write(&a.run.out, &format!("{stem}.json"), &json(&resp.report))?;
    if let Some(trace) = &resp.trace {
        println!("trace: {}", write(&a.run.out, &format!("{stem}_trace.txt"), trace)?.display());
    }
    let r = &resp.report;
    println!(
        "{} {}: thr_mean {:.3}/s, latency_mean {:.6} s, bp_time_total {:.6} s",
        r.topology, r.controller, r.thr_mean, r.latency_mean, r.bp_time_total
    );
    println!("windows: {}\nsummary: {}", csv.display(), summary.display());
    Ok(())
}

fn sweep(backend: &Backend, a: RunArgs) -> Result<()> {
    let topology = topology_ref(&a.topology)?;
    let resp = backend.sweep(&SweepRequest { topology, duration_s: a.duration_s, seed: a.seed })?;
    let name = &resp.table.rows[0].topology;
    let path = write(&a.out, &format!("{name}_sweep.csv"), &resp.csv)?;
    println!("{:>8} {:>12} {:>12} {:>12}", "fraction", "thr_mean", "latency_s", "bp_time_s");
    for (i, r) in resp.table.rows.iter().enumerate() {
        let mark = if i == resp.table.best { " *" } else { "" };
        println!(
            "{:>8.1} {:>12.3} {:>12.6} {:>12.6}{mark}",
            ACTION_FRACTIONS[i], r.thr_mean, r.latency_mean, r.bp_time_total
        );
    }
    println!("best fraction: {:.1}\ntable: {}", resp.best_fraction, path.display());
    Ok(())
}

fn compare(backend: &Backend, a: CompareArgs) -> Result<()> {
    let candidate = match (&a.fraction, &a.actions) {
        (Some(f), _) => Candidate::Fraction(*f),
        (None, Some(path)) => Candidate::Actions(read_actions(path)?),
        (None, None) => Candidate::BestStatic,
    };
    let req = CompareRequest {
        topology: topology_ref(&a.run.topology)?,
        candidate,
        duration_s: a.run.duration_s,
        seed: a.run.seed,
    };
    let resp = backend.compare(&req)?;
    let name = &resp.candidate.topology;
    write(&a.run.out, &format!("{name}_candidate.csv"), &resp.candidate_csv)?;
    write(&a.run.out, &format!("{name}_baseline.csv"), &resp.baseline_csv)?;
    let path = write(&a.run.out, &format!("{name}_compare.json"), &json(&resp.comparison))?;
    let c = &resp.comparison;
    println!(
        "{name}: {} vs {}: thr_gain_pct {:.3}, latency_drop_pct {:.3}, peak_thr_gain_pct {:.3}",
        resp.candidate.controller, resp.baseline.controller, c.thr_gain_pct, c.latency_drop_pct, c.peak_thr_gain_pct
    );
    println!("comparison: {}", path.display());
    Ok(())
}

fn gen_topology(backend: &Backend, a: GenArgs) -> Result<()> {
    let summary = backend.gen_topology(&GenTopologyRequest { n: a.n, seed: a.seed })?;
    match a.out {
        Some(path) => fs::write(&path, &summary.document).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{}", summary.document),
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = streamrc_server::ServeConfig {
        bind: a.bind,
        port: a.port,
        http_port: a.http_port,
        topologies: a.topologies,
        base_seed: a.base_seed,
    };
    runtime()?.block_on(streamrc_server::serve(config))?;
    Ok(())
}
