//! Versioned text checkpoints: the producing config plus every weight and
//! bias tensor by name and shape.
//!
//! ```text
//! BPPO1
//! config {"env_id":"lander",...}
//! model gaussian separate 8 2 64,64,64
//! tensor actor.w0 64 8
//! <64*8 values>
//! tensor actor.b0 64 1
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::config::TrainConfig;
use crate::distributions::DistKind;
use crate::model::{ActorCritic, Architecture};

pub const MAGIC: &str = "BPPO1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: expected header {MAGIC}, found {0:?}")]
    Magic(String),
    #[error("checkpoint line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    Shape { name: String, expected: (usize, usize), found: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: ActorCritic,
}

fn bad(line: usize, message: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed { line, message: message.into() }
}

impl Checkpoint {
    pub fn new(config: TrainConfig, model: ActorCritic) -> Self {
        Self { config, model }
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str("config ");
        out.push_str(&serde_json::to_string(&self.config).expect("config serializes"));
        out.push('\n');
        let hidden: Vec<String> = m.hidden().iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "model {} {} {} {} {}", m.kind(), m.architecture(), m.obs_dim(), m.act_dim(), hidden.join(","));
        for (name, net) in m.net_names().iter().zip(m.nets()) {
            for k in 0..net.n_layers() {
                let (n_in, n_out) = (net.sizes()[k], net.sizes()[k + 1]);
                let (w, b) = net.layer(k);
                for (suffix, values, cols) in [("w", w, n_in), ("b", b, 1)] {
                    let _ = writeln!(out, "tensor {name}.{suffix}{k} {n_out} {cols}");
                    let vals: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
                    out.push_str(&vals.join(" "));
                    out.push('\n');
                }
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(0, format!("unexpected end of file, expected {what}")));

        let (_, magic) = next("header")?;
        if magic != MAGIC {
            return Err(CheckpointError::Magic(magic.to_string()));
        }
        let (ln, cfg_line) = next("config")?;
        let cfg_json = cfg_line.strip_prefix("config ").ok_or_else(|| bad(ln, "expected 'config <json>'"))?;
        let config: TrainConfig = serde_json::from_str(cfg_json).map_err(|e| bad(ln, format!("config: {e}")))?;

        let (ln, model_line) = next("model")?;
        let f: Vec<&str> = model_line.split_whitespace().collect();
        if f.len() != 6 || f[0] != "model" {
            return Err(bad(ln, "expected 'model <dist> <architecture> <obs_dim> <act_dim> <hidden>'"));
        }
        let kind: DistKind = f[1].parse().map_err(|e: String| bad(ln, e))?;
        let arch: Architecture = f[2].parse().map_err(|e: String| bad(ln, e))?;
        let obs_dim: usize = f[3].parse().map_err(|_| bad(ln, "obs_dim"))?;
        let act_dim: usize = f[4].parse().map_err(|_| bad(ln, "act_dim"))?;
        let hidden: Vec<usize> =
            f[5].split(',').map(str::parse).collect::<Result<_, _>>().map_err(|_| bad(ln, "hidden sizes"))?;
        let mut model =
            ActorCritic::zeros(kind, arch, obs_dim, act_dim, &hidden).map_err(|e| bad(ln, format!("{e}")))?;

        let names = model.net_names();
        for (name, net) in names.iter().zip(model.nets_mut()) {
            let sizes = net.sizes().to_vec();
            let mut offset = 0;
            let params = net.params_mut();
            for k in 0..sizes.len() - 1 {
                let (n_in, n_out) = (sizes[k], sizes[k + 1]);
                for (suffix, cols) in [("w", n_in), ("b", 1)] {
                    let expected_name = format!("{name}.{suffix}{k}");
                    let (ln, head) = next("tensor header")?;
                    let h: Vec<&str> = head.split_whitespace().collect();
                    if h.len() != 4 || h[0] != "tensor" {
                        return Err(bad(ln, "expected 'tensor <name> <rows> <cols>'"));
                    }
                    if h[1] != expected_name {
                        return Err(bad(ln, format!("expected tensor {expected_name}, found {}", h[1])));
                    }
                    let rows: usize = h[2].parse().map_err(|_| bad(ln, "rows"))?;
                    let c: usize = h[3].parse().map_err(|_| bad(ln, "cols"))?;
                    if (rows, c) != (n_out, cols) {
                        return Err(CheckpointError::Shape { name: expected_name, expected: (n_out, cols), found: (rows, c) });
                    }
                    let (ln, body) = next("tensor values")?;
                    let vals: Vec<f64> = body
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(ln, format!("value: {e}")))?;
                    if vals.len() != rows * c {
                        return Err(bad(ln, format!("expected {} values, found {}", rows * c, vals.len())));
                    }
                    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
                        return Err(bad(ln, format!("non-finite value {v}")));
                    }
                    params[offset..offset + vals.len()].copy_from_slice(&vals);
                    offset += vals.len();
                }
            }
        }
        let (ln, end) = next("end")?;
        if end != "end" {
            return Err(bad(ln, format!("expected 'end', found {end:?}")));
        }
        Ok(Self { config, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(arch: Architecture, kind: DistKind) -> Checkpoint {
        let mut cfg = TrainConfig::preset(EnvId::Track);
        cfg.distribution = kind;
        cfg.architecture = arch;
        cfg.hidden = vec![7, 5, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = ActorCritic::new(kind, arch, 8, 2, &cfg.hidden, &mut rng).unwrap();
        Checkpoint::new(cfg, model)
    }

    #[test]
    fn round_trip_is_exact() {
        for arch in [Architecture::Separate, Architecture::Shared] {
            for kind in [DistKind::Gaussian, DistKind::Beta] {
                let ck = sample(arch, kind);
                let back = Checkpoint::from_text(&ck.to_text()).unwrap();
                assert_eq!(back.config, ck.config);
                for (a, b) in back.model.nets().iter().zip(ck.model.nets()) {
                    assert_eq!(a.params(), b.params());
                    assert_eq!(a.sizes(), b.sizes());
                }
            }
        }
    }

    #[test]
    fn rejects_damaged_files() {
        let text = sample(Architecture::Separate, DistKind::Beta).to_text();
        assert!(matches!(Checkpoint::from_text("BPPO0\n"), Err(CheckpointError::Magic(_))));
        let wrong_shape = text.replacen("tensor actor.w0 7 8", "tensor actor.w0 8 7", 1);
        assert!(matches!(Checkpoint::from_text(&wrong_shape), Err(CheckpointError::Shape { .. })));
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(matches!(Checkpoint::from_text(&truncated), Err(CheckpointError::Malformed { .. })));
        let no_end = text.replace("end\n", "");
        assert!(Checkpoint::from_text(&no_end).is_err());
    }
}
