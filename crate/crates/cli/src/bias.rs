use std::io::Write;
use std::path::PathBuf;

use anyhow::anyhow;
use bppo::bias_lab::{bias, mc_bias_estimate, out_of_bounds_count, BiasProblem, QFunction};
use bppo::distributions::{BetaParams, DistKind, GaussianParams, PolicyDist};
use bppo::seeding::stream_rng;
use clap::Args;

use crate::{env_seed, runtime, usage, CliResult};

const MC_STREAM: u64 = 10;
const OOB_STREAM: u64 = 11;

#[derive(Args)]
pub struct BiasArgs {
    #[arg(long)]
    dist: DistKind,
    /// `first,...:second,...` parameter lists; Gaussian values are mu/h and
    /// sigma/h, Beta values are alpha and beta.
    #[arg(long)]
    grid: Option<String>,
    /// linear, quadratic, step or all.
    #[arg(long, default_value = "linear")]
    q: String,
    /// Monte Carlo samples per grid point; 0 skips the estimate.
    #[arg(long, default_value_t = 0)]
    n_mc: usize,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// `first,second` parameter point for the out-of-bounds count.
    #[arg(long)]
    point: Option<String>,
    /// Actions drawn for each out-of-bounds count.
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| usage(anyhow!("invalid number {v:?} in grid"))))
        .collect()
}

fn parse_grid(s: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let (a, b) = s.split_once(':').ok_or_else(|| usage(anyhow!("grid must look like 'a1,a2:b1,b2', got {s:?}")))?;
    Ok((parse_list(a)?, parse_list(b)?))
}

fn dist_at(kind: DistKind, h: f64, p1: f64, p2: f64) -> CliResult<PolicyDist> {
    let d = match kind {
        DistKind::Gaussian => GaussianParams::new(vec![p1 * h], vec![p2 * h]).map(PolicyDist::Gaussian),
        DistKind::Beta => BetaParams::new(vec![p1], vec![p2]).map(PolicyDist::Beta),
    };
    d.map_err(|e| usage(anyhow!("grid point ({p1}, {p2}): {e}")))
}

pub fn cmd_bias(args: BiasArgs) -> CliResult<()> {
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(usage(anyhow!("--h must be positive, got {}", args.h)));
    }
    if args.n_mc > 0 && args.n_mc < 100 {
        return Err(usage(anyhow!("--n-mc must be 0 or at least 100, got {}", args.n_mc)));
    }
    let qs: Vec<QFunction> = if args.q == "all" {
        QFunction::ALL.to_vec()
    } else {
        vec![args.q.parse().map_err(usage)?]
    };
    let (names, default_grid, default_point) = match args.dist {
        DistKind::Gaussian => (["mu_over_h", "sigma_over_h", "mu", "sigma"], "0,0.5,0.9,1:0.1,0.5,1", "0.9,0.5"),
        DistKind::Beta => (["alpha", "beta", "alpha", "beta"], "1.5,2,5:1.5,2,5", "2,2"),
    };
    let (g1, g2) = parse_grid(args.grid.as_deref().unwrap_or(default_grid))?;
    let point = parse_list(args.point.as_deref().unwrap_or(default_point))?;
    if point.len() != 2 {
        return Err(usage(anyhow!("--point needs two values")));
    }
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    // Validate every point before any work.
    for &a in &g1 {
        for &b in &g2 {
            dist_at(args.dist, args.h, a, b)?;
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let [p1, p2, s1, s2] = names;
    w.write_record([
        "q".to_string(),
        p1.into(),
        p2.into(),
        format!("true_grad_{s1}"),
        format!("true_grad_{s2}"),
        format!("bias_{s1}"),
        format!("bias_{s2}"),
        format!("mc_bias_{s1}"),
        format!("mc_bias_{s2}"),
        format!("mc_stderr_{s1}"),
        format!("mc_stderr_{s2}"),
        "out_of_bounds".into(),
        "samples".into(),
    ])
    .map_err(runtime)?;
    let mut mc_rng = stream_rng(seed, MC_STREAM);
    let mut oob_rng = stream_rng(seed, OOB_STREAM);
    let mut max_bias = 0.0f64;
    for &q in &qs {
        for &a in &g1 {
            for &b in &g2 {
                let prob = BiasProblem::with_q(args.h, q, dist_at(args.dist, args.h, a, b)?).map_err(usage)?;
                let report = bias(&prob).map_err(runtime)?;
                max_bias = max_bias.max(report.bias[0].abs()).max(report.bias[1].abs());
                let (mc, se) = if args.n_mc > 0 {
                    let (m, s) = mc_bias_estimate(&prob, args.n_mc, &mut mc_rng).map_err(runtime)?;
                    (m.map(|v| v.to_string()), s.map(|v| v.to_string()))
                } else {
                    (Default::default(), Default::default())
                };
                let oob = out_of_bounds_count(&prob, args.samples, &mut oob_rng);
                w.write_record([
                    q.to_string(),
                    a.to_string(),
                    b.to_string(),
                    report.true_grad[0].to_string(),
                    report.true_grad[1].to_string(),
                    report.bias[0].to_string(),
                    report.bias[1].to_string(),
                    mc[0].clone(),
                    mc[1].clone(),
                    se[0].clone(),
                    se[1].clone(),
                    oob.to_string(),
                    args.samples.to_string(),
                ])
                .map_err(runtime)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| runtime(anyhow!("{e}")))?;

    let prob = BiasProblem::with_q(args.h, qs[0], dist_at(args.dist, args.h, point[0], point[1])?).map_err(usage)?;
    let oob = out_of_bounds_count(&prob, args.samples, &mut stream_rng(seed, OOB_STREAM));
    let summary = format!(
        "{} point ({}, {}), h = {}: {oob} of {} sampled actions out of bounds (fraction {:.4}); max |bias| over grid {max_bias:.3e}",
        args.dist,
        point[0],
        point[1],
        args.h,
        args.samples,
        oob as f64 / args.samples.max(1) as f64
    );
    match &args.out {
        Some(path) => {
            std::fs::write(path, &bytes).map_err(runtime)?;
            println!("{summary}");
            println!("wrote {}", path.display());
        }
        None => {
            std::io::stdout().write_all(&bytes).map_err(runtime)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}
