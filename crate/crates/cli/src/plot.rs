//! SVG charts from run and training CSV files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use plotters::prelude::*;

type Series = Vec<(f64, f64)>;

const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

/// Renders the charts for `input` into `out` (default: next to the input)
/// and returns their paths.
pub fn plot(input: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let col = |name: &str| header.iter().position(|h| h == name);

    if let (Some(w), Some(thr), Some(lat)) = (col("window_index"), col("thr"), col("mean_latency")) {
        let mut throughput = Series::new();
        let mut latency = Series::new();
        // Rows whose first field is not a window index (the summary line) are skipped.
        for r in &records {
            let Some(x) = r.get(w).and_then(|s| s.parse::<usize>().ok()) else { continue };
            throughput.push((x as f64, number(r, thr)?));
            latency.push((x as f64, number(r, lat)? * 1e3));
        }
        let a = dir.join(format!("{stem}_throughput.svg"));
        line_chart(&a, "throughput", "window", "tuples/s", &[("thr".into(), throughput)])?;
        let b = dir.join(format!("{stem}_latency.svg"));
        line_chart(&b, "latency", "window", "ms", &[("mean latency".into(), latency)])?;
        return Ok(vec![a, b]);
    }
    if let (Some(it), Some(topo), Some(rew)) = (col("iteration"), col("topology"), col("mean_step_reward")) {
        let mut by_topology: BTreeMap<String, Series> = BTreeMap::new();
        for r in &records {
            let x = number(r, it)?;
            by_topology.entry(r.get(topo).unwrap_or("").to_string()).or_default().push((x, number(r, rew)?));
        }
        let series: Vec<(String, Series)> = by_topology.into_iter().collect();
        let path = dir.join(format!("{stem}_reward.svg"));
        line_chart(&path, "training reward", "iteration", "mean step reward", &series)?;
        return Ok(vec![path]);
    }
    bail!("{}: unrecognized columns {header:?}", input.display())
}

fn number(r: &csv::StringRecord, i: usize) -> Result<f64> {
    let s = r.get(i).unwrap_or("");
    s.parse().with_context(|| format!("line {}: {s:?} is not a number", r.position().map_or(0, |p| p.line())))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi + (hi - lo) * 0.05)
    }
}

fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[(String, Series)]) -> Result<()> {
    let draw = || -> Result<(), Box<dyn std::error::Error>> {
        let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
        root.fill(&WHITE)?;
        let xs = bounds(series.iter().flat_map(|(_, s)| s.iter().map(|p| p.0)));
        let ys = bounds(series.iter().flat_map(|(_, s)| s.iter().map(|p| p.1)));
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(xs.0..xs.1, ys.0.min(0.0)..ys.1)?;
        chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw()?;
        for (i, (name, points)) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            chart
                .draw_series(LineSeries::new(points.iter().copied(), &color))?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], color));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
        root.present()?;
        Ok(())
    };
    draw().map_err(|e| anyhow::anyhow!("cannot render {}: {e}", path.display()))
}
