use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bppo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bppo"))
        .args(args)
        .current_dir(dir)
        .env_remove("BPPO_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_then_eval_for_every_env_and_distribution() {
    let tmp = tempfile::tempdir().unwrap();
    for (env, steps) in [("bandit", "256"), ("lander", "2048"), ("track", "4000")] {
        for dist in ["gaussian", "beta"] {
            let out = format!("{env}-{dist}");
            let o = bppo(&["train", "--env", env, "--dist", dist, "--seed", "3", "--total-steps", steps, "--out-dir", &out], tmp.path());
            assert!(o.status.success(), "{env} {dist}: {}", stderr(&o));
            let run = tmp.path().join(&out);
            let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
            assert_eq!(manifest["status"], "complete");
            assert_eq!(manifest["config"]["env_id"], env);
            for key in ["checkpoint", "metrics", "episodes"] {
                let p = manifest["artifacts"][key].as_str().unwrap();
                assert!(tmp.path().join(p).exists(), "{p}");
            }
            let ck = format!("{out}/checkpoint.bppo");
            let o = bppo(&["eval", &ck, "--mode", "both", "--episodes", "3"], tmp.path());
            assert!(o.status.success(), "{env} {dist}: {}", stderr(&o));
            assert!(stdout(&o).contains("deterministic") && stdout(&o).contains("stochastic"));
            for mode in ["deterministic", "stochastic"] {
                let report: serde_json::Value =
                    serde_json::from_str(&fs::read_to_string(run.join(format!("eval-{mode}.json"))).unwrap()).unwrap();
                assert_eq!(report["per_episode_returns"].as_array().unwrap().len(), 3);
                assert!(run.join(format!("eval-{mode}.csv")).exists());
            }
        }
    }
}

#[test]
fn manifest_replays_the_run_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bppo(&["train", "--env", "bandit", "--dist", "gaussian", "--seed", "5", "--total-steps", "1024", "--out-dir", "a"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bppo(&["train", "--config", "a/manifest.json", "--out-dir", "b"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read(tmp.path().join("a/metrics.jsonl")).unwrap();
    let b = fs::read(tmp.path().join("b/metrics.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(fs::read(tmp.path().join("a/checkpoint.bppo")).unwrap(), fs::read(tmp.path().join("b/checkpoint.bppo")).unwrap());
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("typo.json"), r#"{"learning_rate_final": 0.1}"#).unwrap();
    let o = bppo(&["train", "--config", "typo.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate_final"));

    fs::write(tmp.path().join("range.json"), r#"{"clip_eps": 1.5, "gamma": 2}"#).unwrap();
    let o = bppo(&["train", "--config", "range.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("clip_eps") && stderr(&o).contains("gamma"));

    let o = bppo(&["train", "--env", "moon"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bppo(&["eval", "missing.bppo"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    fs::write(tmp.path().join("junk.bppo"), "not a checkpoint\n").unwrap();
    let o = bppo(&["eval", "junk.bppo"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_values_and_seed_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.json"), r#"{"env_id": "lander", "horizon": 64, "total_timesteps": 128, "hidden": [8, 8]}"#)
        .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bppo"))
        .args(["train", "--config", "small.json", "--out-dir", "r"])
        .current_dir(tmp.path())
        .env("BPPO_SEED", "41")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 41);
    assert_eq!(m["config"]["horizon"], 64);
    assert_eq!(m["config"]["ppo_epochs"], 10);
    assert_eq!(m["updates"], 2);
}

#[test]
fn bias_grids_and_out_of_bounds_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bppo(&["bias", "--dist", "beta", "--q", "all", "--out", "beta.csv"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0 of 5000"));
    let text = fs::read_to_string(tmp.path().join("beta.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        for c in &cols[5..7] {
            assert!(c.parse::<f64>().unwrap().abs() < 1e-8, "{line}");
        }
        assert_eq!(cols[11], "0");
        rows += 1;
    }
    assert_eq!(rows, 27);

    let o = bppo(&["bias", "--dist", "gaussian", "--grid", "0.9:0.5", "--point", "0.9,0.5", "--n-mc", "1000"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let oob: usize = line.split(',').nth(11).unwrap().parse().unwrap();
    assert!(oob > 1500, "{line}");
    assert!(!stderr(&o).contains(" 0 of 5000"));

    for bad in [vec!["--grid", "0.5:2"], vec!["--grid", "1,2"], vec!["--q", "cubic"]] {
        let mut args = vec!["bias", "--dist", "beta"];
        args.extend(bad);
        assert_eq!(bppo(&args, tmp.path()).status.code(), Some(2));
    }
}

#[test]
fn plotdata_smooths_and_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let mut names = Vec::new();
    for run in 0..5 {
        let mut text = String::new();
        for u in 1..=6 {
            text.push_str(&format!(
                "{{\"update\":{u},\"env_steps\":{},\"lr\":0.1,\"policy_loss\":0,\"value_loss\":0,\"entropy\":0,\"clip_fraction\":0,\"approx_kl\":0,\"mean_episode_return_last10\":{}}}\n",
                u * 10,
                run as f64 + u as f64
            ));
        }
        if run == 0 {
            text.push_str("{not json\n");
        }
        let name = format!("m{run}.jsonl");
        fs::write(tmp.path().join(&name), text).unwrap();
        names.push(name);
    }
    let mut args = vec!["plotdata", "--window", "1"];
    args.extend(names.iter().map(String::as_str));
    let o = bppo(&args, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "env_steps,mean,min,max");
    assert_eq!(lines.next().unwrap(), "10,3,1,5");
    assert!(stderr(&o).contains("1 malformed line"));

    let o = bppo(&["plotdata", "m1.jsonl", "--window", "1"], tmp.path());
    let out = stdout(&o);
    for line in out.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        assert_eq!(c[1], c[2]);
    }

    fs::write(tmp.path().join("ep.csv"), "episode_index,env_steps,return,length\n0,5,2,5\n1,9,2,4\nbroken\n").unwrap();
    let o = bppo(&["plotdata", "ep.csv", "--window", "10"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().nth(2).unwrap(), "9,2,2");
    assert!(stderr(&o).contains("1 malformed line"));
}
