//! Versioned text checkpoints for trained models.
//!
//! Layout:
//!
//! ```text
//! # vibe checkpoint v1
//! method=<tag>
//! sha256=<hex digest of everything after the next line>
//! ---
//! <payload: key=value lines, then one parameter per line>
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so loading restores
//! every parameter bit for bit.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{FeatureStats, StandardizationStats, SMPL_DIM, VITALS_DIM};
use crate::cf::{CFModel, SideProjections};
use crate::embed::ViBEModel;
use crate::method::{Method, TrainedModel};
use crate::numkit::DenseMatrix;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# vibe checkpoint v";
const SEPARATOR: &str = "---";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (missing header)")]
    NotACheckpoint,
    #[error("unsupported checkpoint version {found} (this build reads {FORMAT_VERSION})")]
    Version { found: String },
    #[error("content hash mismatch: header says {expected}, payload hashes to {found}")]
    HashMismatch { expected: String, found: String },
    #[error("checkpoint holds a {found} model, expected {expected}")]
    MethodMismatch { expected: Method, found: Method },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("model does not match the method: {0}")]
    Incompatible(String),
}

fn malformed(m: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed(m.into())
}

/// A model together with its method tag and an echo of the settings that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub method: Method,
    /// Free-form `key=value` settings, stored verbatim.
    pub config: Vec<(String, String)>,
    pub model: TrainedModel,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn write_stats(out: &mut String, name: &str, s: &FeatureStats) {
    out.push_str(&format!("stats.{name}.mean={}\n", join(&s.mean)));
    out.push_str(&format!("stats.{name}.std={}\n", join(&s.std)));
}

fn payload(checkpoint: &Checkpoint) -> Result<String, CheckpointError> {
    let mut s = String::new();
    for (k, v) in &checkpoint.config {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(malformed(format!("config entry {k:?} cannot be stored on one line")));
        }
        s.push_str(&format!("config.{k}={v}\n"));
    }
    let params = match (&checkpoint.model, checkpoint.method.is_embedding()) {
        (TrainedModel::Embedding(m), true) => {
            s.push_str(&format!("dims.attribute={}\ndims.visual={}\n", m.attribute_dim(), m.visual_dim()));
            write_stats(&mut s, "smpl", &m.stats.smpl);
            write_stats(&mut s, "vitals", &m.stats.vitals);
            write_stats(&mut s, "visual", &m.stats.visual);
            m.params()
        }
        (TrainedModel::Cf(m), false) => {
            let aware = checkpoint.method == Method::CfAware;
            if aware != m.side.is_some() {
                return Err(CheckpointError::Incompatible(format!(
                    "{} checkpoint {} side projections",
                    checkpoint.method,
                    if aware { "needs" } else { "cannot hold" }
                )));
            }
            s.push_str(&format!(
                "dims.users={}\ndims.items={}\ndims.latent={}\n",
                m.num_users(),
                m.num_items(),
                m.latent_dim()
            ));
            if let Some(side) = &m.side {
                s.push_str(&format!(
                    "dims.side={}\ndims.body_feature={}\ndims.garment_feature={}\n",
                    side.body.rows(),
                    side.body.cols(),
                    side.garment.cols()
                ));
                write_stats(&mut s, "body", &side.body_stats);
                write_stats(&mut s, "garment", &side.garment_stats);
            }
            m.params()
        }
        _ => {
            return Err(CheckpointError::Incompatible(format!(
                "{} cannot store this model kind",
                checkpoint.method
            )))
        }
    };
    s.push_str(&format!("params={}\n", params.len()));
    for p in params {
        s.push_str(&format!("{p}\n"));
    }
    Ok(s)
}

fn digest(payload: &str) -> String {
    hex::encode(Sha256::digest(payload.as_bytes()))
}

pub fn write_checkpoint(checkpoint: &Checkpoint) -> Result<String, CheckpointError> {
    let body = payload(checkpoint)?;
    Ok(format!(
        "{MAGIC}{FORMAT_VERSION}\nmethod={}\nsha256={}\n{SEPARATOR}\n{body}",
        checkpoint.method,
        digest(&body)
    ))
}

struct Fields<'a> {
    entries: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Result<&'a str, CheckpointError> {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| malformed(format!("missing {key}")))
    }

    fn usize(&self, key: &str) -> Result<usize, CheckpointError> {
        self.get(key)?
            .parse()
            .map_err(|_| malformed(format!("{key} is not a count")))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>, CheckpointError> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| x.parse().map_err(|_| malformed(format!("{key}: bad number {x:?}"))))
            .collect()
    }

    fn stats(&self, name: &str, dim: usize) -> Result<FeatureStats, CheckpointError> {
        let s = FeatureStats {
            mean: self.floats(&format!("stats.{name}.mean"))?,
            std: self.floats(&format!("stats.{name}.std"))?,
        };
        if s.mean.len() != dim || s.std.len() != dim {
            return Err(malformed(format!("stats.{name} has the wrong width")));
        }
        Ok(s)
    }
}

/// Parses and verifies a checkpoint. With `expected`, a checkpoint of a
/// different method is rejected.
pub fn read_checkpoint(text: &str, expected: Option<Method>) -> Result<Checkpoint, CheckpointError> {
    let mut lines = text.splitn(4, '\n');
    let header = lines.next().ok_or(CheckpointError::NotACheckpoint)?;
    let version = header.strip_prefix(MAGIC).ok_or(CheckpointError::NotACheckpoint)?;
    if version != FORMAT_VERSION.to_string() {
        return Err(CheckpointError::Version {
            found: version.to_string(),
        });
    }
    let method_line = lines.next().ok_or_else(|| malformed("missing method line"))?;
    let hash_line = lines.next().ok_or_else(|| malformed("missing hash line"))?;
    let rest = lines.next().ok_or_else(|| malformed("missing payload"))?;
    let body = rest
        .strip_prefix(SEPARATOR)
        .and_then(|r| r.strip_prefix('\n'))
        .ok_or_else(|| malformed("missing payload separator"))?;
    let expected_hash = hash_line
        .strip_prefix("sha256=")
        .ok_or_else(|| malformed("missing sha256 line"))?;
    let found = digest(body);
    if found != expected_hash {
        return Err(CheckpointError::HashMismatch {
            expected: expected_hash.to_string(),
            found,
        });
    }
    let method: Method = method_line
        .strip_prefix("method=")
        .ok_or_else(|| malformed("missing method line"))?
        .parse()
        .map_err(malformed)?;
    if let Some(e) = expected {
        if e != method {
            return Err(CheckpointError::MethodMismatch { expected: e, found: method });
        }
    }

    let mut body_lines = body.lines();
    let mut entries = Vec::new();
    let count = loop {
        let line = body_lines.next().ok_or_else(|| malformed("missing params line"))?;
        let (k, v) = line.split_once('=').ok_or_else(|| malformed(format!("bad line {line:?}")))?;
        if k == "params" {
            break v.parse::<usize>().map_err(|_| malformed("params is not a count"))?;
        }
        entries.push((k, v));
    };
    let params: Vec<f64> = body_lines
        .map(|l| l.parse().map_err(|_| malformed(format!("bad parameter {l:?}"))))
        .collect::<Result<_, _>>()?;
    if params.len() != count {
        return Err(malformed(format!("{} parameters, header says {count}", params.len())));
    }
    let fields = Fields { entries };
    let config = fields
        .entries
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.to_string())))
        .collect();

    let model = if method.is_embedding() {
        let (a, v) = (fields.usize("dims.attribute")?, fields.usize("dims.visual")?);
        let stats = StandardizationStats {
            smpl: fields.stats("smpl", SMPL_DIM)?,
            vitals: fields.stats("vitals", VITALS_DIM)?,
            visual: fields.stats("visual", v)?,
        };
        // Architecture from the dims; the seeded init is overwritten.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut m = ViBEModel::random(a, v, stats, &mut rng).map_err(|e| malformed(e.to_string()))?;
        m.set_params(&params).map_err(|e| malformed(e.to_string()))?;
        TrainedModel::Embedding(m)
    } else {
        let (users, items, latent) = (
            fields.usize("dims.users")?,
            fields.usize("dims.items")?,
            fields.usize("dims.latent")?,
        );
        let side = if method == Method::CfAware {
            let (d, bf, gf) = (
                fields.usize("dims.side")?,
                fields.usize("dims.body_feature")?,
                fields.usize("dims.garment_feature")?,
            );
            Some(SideProjections {
                body: DenseMatrix::zeros(d, bf),
                garment: DenseMatrix::zeros(d, gf),
                body_stats: fields.stats("body", bf)?,
                garment_stats: fields.stats("garment", gf)?,
            })
        } else {
            None
        };
        let mut m = CFModel {
            global_bias: 0.0,
            user_latent: DenseMatrix::zeros(users, latent),
            user_bias: vec![0.0; users],
            item_latent: DenseMatrix::zeros(items, latent),
            item_bias: vec![0.0; items],
            side,
        };
        m.set_params(&params).map_err(|e| malformed(e.to_string()))?;
        TrainedModel::Cf(m)
    };
    Ok(Checkpoint { method, config, model })
}
