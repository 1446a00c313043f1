//! Non-learning controllers: the unthrottled default scheme, fixed and
//! scripted throttles, and the static-rate sweep.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{collect_window, report, write_window_csv, ThroughputReport, WindowRow};
use crate::simengine::{action_for_fraction, SimConfig, SimError, SimState, ACTION_FRACTIONS};
use crate::time::SimDuration;
use crate::topology::TopologySpec;

pub const DEFAULT_DURATION_S: f64 = 300.0;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot compare {0}")]
    Mismatch(String),
    #[error("run needs a positive duration and window length")]
    BadDuration,
    #[error("action script is empty")]
    EmptyScript,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Summary and per-window series of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub topology: String,
    pub controller: String,
    pub duration_s: f64,
    pub k_s: f64,
    pub seed: u64,
    pub thr_mean: f64,
    pub thr_series: Vec<f64>,
    /// Tuple-weighted mean source-to-sink latency over the run.
    pub latency_mean: f64,
    pub latency_series: Vec<f64>,
    pub bp_time_total: f64,
    pub bp_series: Vec<f64>,
    pub actions: Vec<usize>,
}

impl RunReport {
    pub fn rows(&self) -> Vec<WindowRow> {
        (0..self.thr_series.len())
            .map(|i| WindowRow {
                window_index: i,
                thr: self.thr_series[i],
                mean_latency: self.latency_series[i],
                bp_time_total: self.bp_series[i],
                action: self.actions.get(i).copied(),
            })
            .collect()
    }

    /// Per-window CSV followed by a `summary` row with the run means.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), BaselineError> {
        write_window_csv(&self.rows(), &mut out)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "summary".to_string(),
            self.thr_mean.to_string(),
            self.latency_mean.to_string(),
            self.bp_time_total.to_string(),
            String::new(),
        ])?;
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Chooses the action for each window from the previous window's report.
pub trait Controller {
    fn label(&self) -> String;
    fn action(&mut self, window_index: usize, last: Option<&ThroughputReport>) -> usize;
}

pub struct Fixed(pub usize);

impl Controller for Fixed {
    fn label(&self) -> String {
        if self.0 == ACTION_FRACTIONS.len() - 1 {
            "default".into()
        } else {
            format!("static-{:.1}", ACTION_FRACTIONS[self.0])
        }
    }

    fn action(&mut self, _: usize, _: Option<&ThroughputReport>) -> usize {
        self.0
    }
}

/// Replays a list of actions, holding the last one once the list runs out.
pub struct Script(pub Vec<usize>);

impl Controller for Script {
    fn label(&self) -> String {
        "script".into()
    }

    fn action(&mut self, i: usize, _: Option<&ThroughputReport>) -> usize {
        self.0[i.min(self.0.len() - 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub duration_s: f64,
    pub k_s: f64,
    pub seed: u64,
}

impl RunOptions {
    pub fn new(duration_s: f64, seed: u64) -> Self {
        RunOptions { duration_s, k_s: 1.0, seed }
    }
}

/// Runs `controller` for `duration_s / k_s` windows.
pub fn run_controller(
    spec: &TopologySpec,
    opts: RunOptions,
    sim_config: SimConfig,
    controller: &mut dyn Controller,
) -> Result<(RunReport, SimState), BaselineError> {
    if !(opts.duration_s > 0.0 && opts.k_s > 0.0) {
        return Err(BaselineError::BadDuration);
    }
    let windows = (opts.duration_s / opts.k_s).round().max(1.0) as usize;
    let mut state = SimState::new(Arc::new(spec.clone()), opts.seed, sim_config)?;
    let step = SimDuration::from_secs_f64(opts.k_s);

    let mut thr_series = Vec::with_capacity(windows);
    let mut latency_series = Vec::with_capacity(windows);
    let mut bp_series = Vec::with_capacity(windows);
    let mut actions = Vec::with_capacity(windows);
    let (mut processed, mut latency_sum) = (0.0, 0.0);
    let mut last: Option<ThroughputReport> = None;
    for i in 0..windows {
        let action = controller.action(i, last.as_ref()).min(ACTION_FRACTIONS.len() - 1);
        if i == 0 || actions.last() != Some(&action) {
            state.set_throttle(ACTION_FRACTIONS[action])?;
        }
        state.advance(step);
        let w = collect_window(&mut state, opts.k_s);
        let r = report(&w);
        let n = r.thr * opts.k_s;
        processed += n;
        latency_sum += r.mean_latency * n;
        thr_series.push(r.thr);
        latency_series.push(r.mean_latency);
        bp_series.push(r.bp_time_total);
        actions.push(action);
        last = Some(r);
    }
    let report = RunReport {
        topology: spec.name.clone(),
        controller: controller.label(),
        duration_s: windows as f64 * opts.k_s,
        k_s: opts.k_s,
        seed: opts.seed,
        thr_mean: thr_series.iter().sum::<f64>() / windows as f64,
        thr_series,
        latency_mean: if processed > 0.0 { latency_sum / processed } else { 0.0 },
        latency_series,
        bp_time_total: bp_series.iter().sum(),
        bp_series,
        actions,
    };
    Ok((report, state))
}

/// Runs with a fixed throttle fraction.
pub fn run_fixed(spec: &TopologySpec, fraction: f64, opts: RunOptions) -> Result<RunReport, BaselineError> {
    let action = action_for_fraction(fraction).ok_or(SimError::BadFraction(fraction))?;
    Ok(run_controller(spec, opts, SimConfig::default(), &mut Fixed(action))?.0)
}

/// The default scheme: no rate limiting, back pressure is the only flow control.
pub fn run_default(spec: &TopologySpec, duration_s: f64, seed: u64) -> Result<RunReport, BaselineError> {
    run_fixed(spec, 1.0, RunOptions::new(duration_s, seed))
}

pub fn run_script(spec: &TopologySpec, actions: Vec<usize>, opts: RunOptions) -> Result<RunReport, BaselineError> {
    if actions.is_empty() {
        return Err(BaselineError::EmptyScript);
    }
    if let Some(&bad) = actions.iter().find(|&&a| a >= ACTION_FRACTIONS.len()) {
        return Err(SimError::BadFraction(bad as f64 / 10.0 + 0.1).into());
    }
    Ok(run_controller(spec, opts, SimConfig::default(), &mut Script(actions))?.0)
}

/// One run per throttle fraction with common random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<RunReport>,
    /// Index into `rows` (equivalently, the action) of the best fraction.
    pub best: usize,
}

impl SweepTable {
    pub fn best_fraction(&self) -> f64 {
        ACTION_FRACTIONS[self.best]
    }

    pub fn best_report(&self) -> &RunReport {
        &self.rows[self.best]
    }

    pub fn default_report(&self) -> &RunReport {
        self.rows.last().expect("ten rows")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BaselineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fraction", "thr_mean", "latency_mean", "bp_time_total", "best"])?;
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record([
                format!("{:.1}", ACTION_FRACTIONS[i]),
                r.thr_mean.to_string(),
                r.latency_mean.to_string(),
                r.bp_time_total.to_string(),
                u8::from(i == self.best).to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Index of the highest mean throughput, ties broken by lower mean latency.
pub fn best_row(rows: &[RunReport]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        if r.thr_mean > b.thr_mean || (r.thr_mean == b.thr_mean && r.latency_mean < b.latency_mean) {
            best = i;
        }
    }
    best
}

pub fn sweep_static(spec: &TopologySpec, duration_s: f64, seed: u64) -> Result<SweepTable, BaselineError> {
    let opts = RunOptions::new(duration_s, seed);
    let rows = ACTION_FRACTIONS
        .par_iter()
        .map(|&f| run_fixed(spec, f, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let best = best_row(&rows);
    Ok(SweepTable { rows, best })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub thr_gain_pct: f64,
    pub latency_drop_pct: f64,
    /// Gain of the best candidate window over the best baseline window.
    pub peak_thr_gain_pct: f64,
}

fn pct(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}

pub fn compare(candidate: &RunReport, baseline: &RunReport) -> Result<Comparison, BaselineError> {
    if candidate.topology != baseline.topology {
        return Err(BaselineError::Mismatch(format!(
            "topology {} with {}",
            candidate.topology, baseline.topology
        )));
    }
    if (candidate.duration_s - baseline.duration_s).abs() > 1e-9 {
        return Err(BaselineError::Mismatch(format!(
            "duration {}s with {}s",
            candidate.duration_s, baseline.duration_s
        )));
    }
    let peak = |r: &RunReport| r.thr_series.iter().copied().fold(0.0, f64::max);
    Ok(Comparison {
        thr_gain_pct: pct(candidate.thr_mean - baseline.thr_mean, baseline.thr_mean),
        latency_drop_pct: pct(baseline.latency_mean - candidate.latency_mean, baseline.latency_mean),
        peak_thr_gain_pct: pct(peak(candidate) - peak(baseline), peak(baseline)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::builtin;

    fn report(thr: f64, lat: f64) -> RunReport {
        RunReport {
            topology: "t".into(),
            controller: "c".into(),
            duration_s: 10.0,
            k_s: 1.0,
            seed: 0,
            thr_mean: thr,
            thr_series: vec![thr; 10],
            latency_mean: lat,
            latency_series: vec![lat; 10],
            bp_time_total: 0.0,
            bp_series: vec![0.0; 10],
            actions: vec![9; 10],
        }
    }

    #[test]
    fn compare_arithmetic() {
        let c = compare(&report(100.0, 1.0), &report(100.0, 1.0)).unwrap();
        assert_eq!((c.thr_gain_pct, c.latency_drop_pct), (0.0, 0.0));
        let c = compare(&report(110.0, 0.5), &report(100.0, 1.0)).unwrap();
        assert!((c.thr_gain_pct - 10.0).abs() < 1e-12);
        assert!((c.latency_drop_pct - 50.0).abs() < 1e-12);
        let mut other = report(1.0, 1.0);
        other.topology = "u".into();
        assert!(compare(&other, &report(1.0, 1.0)).is_err());
        let mut other = report(1.0, 1.0);
        other.duration_s = 20.0;
        assert!(compare(&other, &report(1.0, 1.0)).is_err());
    }

    #[test]
    fn best_row_breaks_ties_on_latency() {
        let rows = vec![report(10.0, 2.0), report(12.0, 3.0), report(12.0, 1.0), report(11.0, 0.1)];
        assert_eq!(best_row(&rows), 2);
    }

    #[test]
    fn series_lengths_match_windows() {
        let r = run_fixed(&builtin("wct").unwrap(), 0.5, RunOptions { duration_s: 6.0, k_s: 2.0, seed: 1 })
            .unwrap();
        assert_eq!(r.thr_series.len(), 3);
        assert_eq!(r.latency_series.len(), 3);
        assert_eq!(r.duration_s, 6.0);
    }

    #[test]
    fn script_holds_last_action() {
        let r = run_script(&builtin("wct").unwrap(), vec![2, 7], RunOptions::new(4.0, 0)).unwrap();
        assert_eq!(r.actions, vec![2, 7, 7, 7]);
        assert!(run_script(&builtin("wct").unwrap(), vec![], RunOptions::new(4.0, 0)).is_err());
        assert!(run_script(&builtin("wct").unwrap(), vec![10], RunOptions::new(4.0, 0)).is_err());
    }

    #[test]
    fn csv_has_summary_row() {
        let mut buf = Vec::new();
        report(5.0, 0.5).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("window_index,thr,mean_latency,bp_time_total,action\n0,5,0.5,0,9\n"));
        assert!(text.ends_with("summary,5,0.5,0,\n"), "{text}");
    }
}
