use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use bppo::ppo::{EpisodeRecord, MetricsRecord};

use crate::{runtime, usage, CliResult};

/// `(env_steps, value)` points read from one run.
struct Series {
    steps: Vec<u64>,
    values: Vec<f64>,
}

/// Trailing moving average over up to `window` points.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Reads episode returns from a CSV episode log, or the recent-return
/// column from a metrics JSONL log. Returns the series and the number of
/// malformed lines skipped.
fn read_series(path: &Path) -> CliResult<(Series, usize)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    let mut s = Series { steps: Vec::new(), values: Vec::new() };
    let mut skipped = 0;
    if path.extension().is_some_and(|e| e == "csv") {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        for row in r.deserialize::<EpisodeRecord>() {
            match row {
                Ok(e) => {
                    s.steps.push(e.env_steps);
                    s.values.push(e.episode_return);
                }
                Err(e) => {
                    log::warn!("{}: skipping malformed row: {e}", path.display());
                    skipped += 1;
                }
            }
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<MetricsRecord>(line) {
                Ok(m) => {
                    if let Some(v) = m.mean_episode_return_last10 {
                        s.steps.push(m.env_steps);
                        s.values.push(v);
                    }
                }
                Err(e) => {
                    log::warn!("{}:{}: skipping malformed line: {e}", path.display(), i + 1);
                    skipped += 1;
                }
            }
        }
    }
    Ok((s, skipped))
}

pub fn cmd_plotdata(files: &[PathBuf], window: usize, out: Option<PathBuf>) -> CliResult<()> {
    if window == 0 {
        return Err(usage(anyhow!("--window must be at least 1")));
    }
    let mut runs = Vec::new();
    let mut skipped = 0;
    for f in files {
        let (s, k) = read_series(f)?;
        if s.values.is_empty() {
            return Err(usage(anyhow!("{} contains no usable points", f.display())));
        }
        skipped += k;
        runs.push(s);
    }
    let smoothed: Vec<Vec<f64>> = runs.iter().map(|r| smooth(&r.values, window)).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let points;
    if runs.len() == 1 {
        points = runs[0].values.len();
        w.write_record(["env_steps", "value", "smoothed"]).map_err(runtime)?;
        for i in 0..points {
            w.write_record([runs[0].steps[i].to_string(), runs[0].values[i].to_string(), smoothed[0][i].to_string()])
                .map_err(runtime)?;
        }
    } else {
        points = runs.iter().map(|r| r.values.len()).min().unwrap_or(0);
        w.write_record(["env_steps", "mean", "min", "max"]).map_err(runtime)?;
        for i in 0..points {
            let col: Vec<f64> = smoothed.iter().map(|s| s[i]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            w.write_record([runs[0].steps[i].to_string(), mean.to_string(), min.to_string(), max.to_string()])
                .map_err(runtime)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| runtime(anyhow!("{e}")))?;
    match &out {
        Some(p) => fs::write(p, &bytes).with_context(|| format!("writing {}", p.display())).map_err(runtime)?,
        None => std::io::stdout().write_all(&bytes).map_err(runtime)?,
    }
    eprintln!("{} run(s), {points} point(s), window {window}, {skipped} malformed line(s) skipped", runs.len());
    Ok(())
}
