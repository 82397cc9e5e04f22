use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use bppo::checkpoint::Checkpoint;
use bppo::config::{PartialTrainConfig, TrainConfig};
use bppo::distributions::DistKind;
use bppo::envs::EnvId;
use bppo::ppo::{train_with, EpisodeRecord, MetricsRecord, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::{env_seed, runtime, usage, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bppo";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const EPISODES_FILE: &str = "episodes.csv";

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub env: Option<EnvId>,
    pub dist: Option<DistKind>,
    pub seed: Option<u64>,
    pub total_steps: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Aborted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifacts {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub episodes: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub status: RunStatus,
    pub error: Option<String>,
    pub updates: u64,
    pub env_steps: u64,
    pub artifacts: Artifacts,
    pub code_version: String,
    pub started_at_unix: f64,
    pub finished_at_unix: f64,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Reads a strict config file or the config echoed in a run manifest.
pub fn read_config_file(path: &Path) -> CliResult<PartialTrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(usage)?;
    if value.get("config").is_some() {
        let manifest: RunManifest =
            serde_json::from_value(value).with_context(|| format!("reading manifest {}", path.display())).map_err(usage)?;
        return Ok(manifest.config.into());
    }
    serde_json::from_value(value).with_context(|| format!("invalid config {}", path.display())).map_err(usage)
}

fn write_outputs(dir: &Path, outcome: &TrainOutcome) -> anyhow::Result<Artifacts> {
    let artifacts = Artifacts {
        checkpoint: dir.join(CHECKPOINT_FILE),
        metrics: dir.join(METRICS_FILE),
        episodes: dir.join(EPISODES_FILE),
    };
    Checkpoint::new(outcome.config.clone(), outcome.model.clone()).save(&artifacts.checkpoint)?;
    write_metrics(&artifacts.metrics, &outcome.metrics)?;
    write_episodes(&artifacts.episodes, &outcome.episodes)?;
    Ok(artifacts)
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_episodes(path: &Path, records: &[EpisodeRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(["episode_index", "env_steps", "return", "length"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => PartialTrainConfig::default(),
    };
    let seed = match args.seed {
        Some(s) => Some(s),
        None if file.seed.is_none() => env_seed()?,
        None => None,
    };
    let overrides = PartialTrainConfig {
        env_id: args.env,
        distribution: args.dist,
        seed,
        total_timesteps: args.total_steps,
        ..Default::default()
    };
    let cfg = TrainConfig::resolve(file, overrides).map_err(usage)?;
    let dir = args
        .out_dir
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}-seed{}", cfg.env_id, cfg.distribution, cfg.seed)));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(usage)?;

    let n_updates = cfg.n_updates();
    log::info!(
        "training {} / {} seed {}: {} updates of {} steps",
        cfg.env_id,
        cfg.distribution,
        cfg.seed,
        n_updates,
        cfg.steps_per_update()
    );
    let report_every = (n_updates / 10).max(1);
    let started = now();
    let result = train_with(cfg.clone(), |stats, rec| {
        if rec.update % report_every == 0 || rec.update == n_updates {
            log::info!(
                "update {}/{} steps {} return(last10) {} entropy {:.3} kl {:.4} clip {:.3}",
                rec.update,
                n_updates,
                rec.env_steps,
                rec.mean_episode_return_last10.map_or("n/a".into(), |r| format!("{r:.3}")),
                stats.entropy,
                stats.approx_kl,
                stats.mean_clip_fraction
            );
        }
    });
    let (outcome, status, error) = match result {
        Ok(o) => (o, RunStatus::Complete, None),
        Err(abort) => (*abort.outcome, RunStatus::Aborted, Some(format!("update {}: {}", abort.update, abort.error))),
    };
    let artifacts = write_outputs(&dir, &outcome).map_err(runtime)?;
    let manifest = RunManifest {
        config: cfg,
        status,
        updates: outcome.metrics.len() as u64,
        env_steps: outcome.metrics.last().map_or(0, |m| m.env_steps),
        error: error.clone(),
        artifacts,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at_unix: started,
        finished_at_unix: now(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .with_context(|| format!("writing {}", manifest_path.display()))
        .map_err(runtime)?;
    if let Some(e) = error {
        return Err(runtime(anyhow::anyhow!("training aborted ({e}); last good checkpoint in {}", dir.display())));
    }
    let last = outcome.metrics.last().and_then(|m| m.mean_episode_return_last10);
    println!(
        "trained {} updates, {} episodes; mean return (last 10 episodes) {}; manifest {}",
        manifest.updates,
        outcome.episodes.len(),
        last.map_or("n/a".into(), |r| format!("{r:.3}")),
        manifest_path.display()
    );
    Ok(())
}
