use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use bppo::checkpoint::Checkpoint;
use bppo::eval::{evaluate, evaluate_traced, EvalMode};

use crate::{env_seed, runtime, usage, CliResult};

pub fn cmd_eval(
    checkpoint: &Path,
    modes: &[EvalMode],
    episodes: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
    trace: bool,
) -> CliResult<()> {
    if !checkpoint.exists() {
        return Err(usage(anyhow::anyhow!("checkpoint {} does not exist", checkpoint.display())));
    }
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display())).map_err(usage)?;
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let env_id = ck.config.env_id;
    let prefix = out.unwrap_or_else(|| checkpoint.with_file_name("eval"));
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(usage)?;
    }
    for &mode in modes {
        let (report, steps) = if trace {
            evaluate_traced(&ck.model, env_id, mode, episodes, seed).map(|(r, t)| (r, Some(t)))
        } else {
            evaluate(&ck.model, env_id, mode, episodes, seed).map(|r| (r, None))
        }
        .map_err(usage)?;
        let base = format!("{}-{}", prefix.display(), mode);
        let json_path = PathBuf::from(format!("{base}.json"));
        let csv_path = PathBuf::from(format!("{base}.csv"));
        fs::write(&json_path, serde_json::to_string_pretty(&report).expect("report serializes")).map_err(runtime)?;
        fs::write(&csv_path, report.to_csv()).map_err(runtime)?;
        if let Some(rows) = steps {
            let path = PathBuf::from(format!("{base}-trace.jsonl"));
            let mut w = BufWriter::new(fs::File::create(&path).map_err(runtime)?);
            for row in &rows {
                serde_json::to_writer(&mut w, row).map_err(runtime)?;
                w.write_all(b"\n").map_err(runtime)?;
            }
            w.flush().map_err(runtime)?;
        }
        println!(
            "{env_id} {mode}: {} episodes, mean {:.3} ± {:.3}, success rate {:.2} (threshold {}) -> {}",
            report.per_episode_returns.len(),
            report.mean,
            report.std,
            report.success_rate,
            report.success_threshold,
            json_path.display()
        );
    }
    Ok(())
}
