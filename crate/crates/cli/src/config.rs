//! Run configuration: built-in defaults overridden by an optional TOML file.
//!
//! Every section mirrors one module's settings and every key is optional:
//!
//! ```toml
//! seed = 0
//! method = "vibe"
//! jobs = 1
//!
//! [paths]
//! data = "data"
//! checkpoint = "model.ckpt"
//! metrics = "metrics.txt"
//!
//! [vibe]
//! learning_rate = 0.003
//! schedule = [[100, 0.3], [130, 0.3]]
//!
//! [cf_aware]
//! epochs = 80
//! ```
//!
//! Sections: `paths`, `synthetic`, `cluster`, `split`, `vibe`,
//! `agnostic_embed`, `cf_agnostic`, `cf_aware`, `eval`, `explain`.
//! Unknown keys are rejected.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use vibe_core::catalog::{GarmentCategory, SyntheticSpec};
use vibe_core::cf::CFTrainConfig;
use vibe_core::embed::{Margins, ViBETrainConfig};
use vibe_core::eval::EvalConfig;
use vibe_core::explain::ExplainConfig;
use vibe_core::method::{Method, MethodTrainer};
use vibe_core::typing::{ClusterConfig, SplitConfig};

use crate::failure::{Classify, Failure};

/// Copies every `Some` field of an override section onto its target.
macro_rules! overlay {
    ($section:expr, $target:expr; $($field:ident),* $(,)?) => {
        $(if let Some(v) = &$section.$field {
            $target.$field = v.clone();
        })*
    };
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    method: Option<String>,
    jobs: Option<usize>,
    paths: PathsSection,
    synthetic: SyntheticSection,
    cluster: ClusterSection,
    split: SplitSection,
    vibe: EmbedSection,
    agnostic_embed: EmbedSection,
    cf_agnostic: CfSection,
    cf_aware: CfSection,
    eval: EvalSection,
    explain: ExplainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PathsSection {
    data: Option<PathBuf>,
    clustering: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    metrics: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SyntheticSection {
    num_types: Option<usize>,
    bodies_per_type: Option<Vec<usize>>,
    num_garments: Option<usize>,
    versatility_distribution: Option<Vec<f64>>,
    body_noise: Option<f64>,
    type_separation: Option<f64>,
    vitals_scale: Option<f64>,
    attribute_dim: Option<usize>,
    indicator_block: Option<usize>,
    attribute_noise_flip_rate: Option<f64>,
    filler_rate: Option<f64>,
    visual_dim: Option<usize>,
    visual_noise: Option<f64>,
    observation_rate: Option<f64>,
    category: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClusterSection {
    k: Option<usize>,
    max_iter: Option<usize>,
    restarts: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SplitSection {
    body_holdout: Option<f64>,
    garment_holdout: Option<f64>,
    min_heldout_bodies: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EmbedSection {
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    schedule: Option<Vec<(usize, f64)>>,
    epochs: Option<usize>,
    triplets_per_batch: Option<usize>,
    batches_per_epoch: Option<usize>,
    alpha_p: Option<f64>,
    alpha_n: Option<f64>,
    body_body_loss: Option<bool>,
    largest_type_only: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CfSection {
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    epochs: Option<usize>,
    latent_dim: Option<usize>,
    side_dim: Option<usize>,
    negatives_per_positive: Option<usize>,
    init_scale: Option<f64>,
    propagated_labels: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSection {
    runs: Option<usize>,
    quantiles: Option<Vec<u32>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExplainSection {
    m: Option<usize>,
    top_k: Option<usize>,
    ridge: Option<f64>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

impl EmbedSection {
    fn apply(&self, target: &mut ViBETrainConfig, section: &str) -> Result<(), Failure> {
        overlay!(self, target; learning_rate, weight_decay, schedule, epochs, triplets_per_batch,
            batches_per_epoch, body_body_loss, largest_type_only);
        if self.alpha_p.is_some() || self.alpha_n.is_some() {
            target.margins = Margins::new(
                self.alpha_p.unwrap_or(target.margins.alpha_p),
                self.alpha_n.unwrap_or(target.margins.alpha_n),
            )
            .usage_err(|| format!("[{section}]"))?;
        }
        Ok(())
    }
}

impl CfSection {
    fn apply(&self, target: &mut CFTrainConfig) {
        overlay!(self, target; learning_rate, weight_decay, epochs, latent_dim, side_dim,
            negatives_per_positive, init_scale, propagated_labels);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    /// Dataset directory (catalog plus optional oracle/planted companions).
    pub data: PathBuf,
    /// Saved clustering; when absent, bodies are clustered on the fly.
    pub clustering: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            clustering: None,
            checkpoint: PathBuf::from("model.ckpt"),
            metrics: PathBuf::from("metrics.txt"),
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Seed of clustering, splitting, training and evaluation.
    pub seed: u64,
    pub method: Method,
    pub jobs: usize,
    pub paths: Paths,
    pub synthetic: SyntheticSpec,
    pub cluster: ClusterConfig,
    pub split: SplitConfig,
    pub trainer: MethodTrainer,
    pub eval: EvalConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            method: Method::Vibe,
            jobs: 1,
            paths: Paths::default(),
            synthetic: SyntheticSpec::default(),
            cluster: ClusterConfig::default(),
            split: SplitConfig::default(),
            trainer: MethodTrainer::new(Method::Vibe),
            // The quantile curve is opt-in on the command line.
            eval: EvalConfig {
                quantiles: Vec::new(),
                ..EvalConfig::default()
            },
            explain: ExplainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overridden by the file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).data_err(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).map_err(|e| match e {
                    Failure::Usage(inner) => Failure::Usage(inner.context(format!("config {}", p.display()))),
                    other => other,
                })
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Failure::usage(e.to_string().trim_end().to_string()))?;
        let mut c = Self::default();
        if let Some(m) = &file.method {
            c.method = m.parse().map_err(Failure::usage)?;
        }
        overlay!(file, c; seed, jobs);

        let p = &file.paths;
        overlay!(p, c.paths; data, checkpoint, metrics);
        if p.clustering.is_some() {
            c.paths.clustering = p.clustering.clone();
        }

        let s = &file.synthetic;
        overlay!(s, c.synthetic; num_types, bodies_per_type, num_garments, versatility_distribution, body_noise,
            type_separation, vitals_scale, attribute_dim, indicator_block, attribute_noise_flip_rate, filler_rate,
            visual_dim, visual_noise, observation_rate, seed);
        if let Some(cat) = &s.category {
            let category: GarmentCategory = cat.parse().map_err(Failure::usage)?;
            c.synthetic.category = category;
            if s.attribute_dim.is_none() {
                c.synthetic.attribute_dim = category.default_attribute_count();
            }
        }

        overlay!(file.cluster, c.cluster; k, max_iter, restarts);
        overlay!(file.split, c.split; body_holdout, garment_holdout, min_heldout_bodies);
        file.vibe.apply(&mut c.trainer.vibe, "vibe")?;
        file.agnostic_embed.apply(&mut c.trainer.agnostic_embed, "agnostic_embed")?;
        file.cf_agnostic.apply(&mut c.trainer.cf_agnostic);
        file.cf_aware.apply(&mut c.trainer.cf_aware);
        overlay!(file.eval, c.eval; runs, quantiles);
        overlay!(file.explain, c.explain; m, top_k);
        overlay!(file.explain, c.explain.probe; ridge, tolerance, max_iterations);
        c.validate()?;
        Ok(c)
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            seed: self.seed,
            ..self.cluster.clone()
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            seed: self.seed,
            ..self.split.clone()
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            seed: self.seed,
            split: self.split_config(),
            ..self.eval.clone()
        }
    }

    pub fn trainer(&self, method: Method) -> MethodTrainer {
        MethodTrainer {
            method,
            ..self.trainer.clone()
        }
    }

    /// Rejects settings no command could run with.
    pub fn validate(&self) -> Result<(), Failure> {
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Failure::usage(what.to_string())) };
        check(self.jobs >= 1, "jobs must be at least 1")?;
        check(self.eval.runs >= 1, "eval.runs must be at least 1")?;
        check(
            self.eval.quantiles.iter().all(|&q| (1..=100).contains(&q)),
            "eval.quantiles must lie in 1..=100",
        )?;
        check(self.cluster.k >= 1, "cluster.k must be at least 1")?;
        check(self.cluster.restarts >= 1, "cluster.restarts must be at least 1")?;
        let fraction = |f: f64| f > 0.0 && f < 1.0;
        check(
            fraction(self.split.body_holdout) && fraction(self.split.garment_holdout),
            "split holdouts must lie strictly between 0 and 1",
        )?;
        check(self.explain.m >= 1 && self.explain.top_k >= 1, "explain.m and explain.top_k must be positive")?;
        self.synthetic.validate().usage_err(|| "[synthetic]".into())?;
        self.trainer.vibe.validate().usage_err(|| "[vibe]".into())?;
        self.trainer.agnostic_embed.validate().usage_err(|| "[agnostic_embed]".into())?;
        self.trainer.cf_agnostic.validate().usage_err(|| "[cf_agnostic]".into())?;
        self.trainer.cf_aware.validate().usage_err(|| "[cf_aware]".into())
    }

    /// Canonical `key=value` rendering of every setting that influences
    /// training `method`: stored in checkpoints and hashed into metrics.
    pub fn training_entries(&self, method: Method) -> Vec<(String, String)> {
        let mut e = Entries::default();
        e.push("method", method);
        e.push("seed", self.seed);
        e.push("cluster.k", self.cluster.k);
        e.push("cluster.max_iter", self.cluster.max_iter);
        e.push("cluster.restarts", self.cluster.restarts);
        e.push("split.body_holdout", self.split.body_holdout);
        e.push("split.garment_holdout", self.split.garment_holdout);
        e.push("split.min_heldout_bodies", self.split.min_heldout_bodies);
        let t = &self.trainer;
        match method {
            Method::Vibe | Method::AgnosticEmbed => {
                let (name, c) = match method {
                    Method::Vibe => ("vibe", &t.vibe),
                    _ => ("agnostic_embed", &t.agnostic_embed),
                };
                e.push(&format!("{name}.learning_rate"), c.learning_rate);
                e.push(&format!("{name}.weight_decay"), c.weight_decay);
                let schedule: Vec<String> = c.schedule.iter().map(|(ep, f)| format!("{ep}:{f}")).collect();
                e.push(&format!("{name}.schedule"), schedule.join(","));
                e.push(&format!("{name}.epochs"), c.epochs);
                e.push(&format!("{name}.triplets_per_batch"), c.triplets_per_batch);
                e.push(&format!("{name}.batches_per_epoch"), c.batches_per_epoch);
                e.push(&format!("{name}.alpha_p"), c.margins.alpha_p);
                e.push(&format!("{name}.alpha_n"), c.margins.alpha_n);
                e.push(&format!("{name}.body_body_loss"), c.body_body_loss);
                e.push(&format!("{name}.largest_type_only"), c.largest_type_only);
            }
            Method::CfAgnostic | Method::CfAware => {
                let (name, c) = match method {
                    Method::CfAgnostic => ("cf_agnostic", &t.cf_agnostic),
                    _ => ("cf_aware", &t.cf_aware),
                };
                e.push(&format!("{name}.learning_rate"), c.learning_rate);
                e.push(&format!("{name}.weight_decay"), c.weight_decay);
                e.push(&format!("{name}.epochs"), c.epochs);
                e.push(&format!("{name}.latent_dim"), c.latent_dim);
                e.push(&format!("{name}.side_dim"), c.side_dim);
                e.push(&format!("{name}.negatives_per_positive"), c.negatives_per_positive);
                e.push(&format!("{name}.init_scale"), c.init_scale);
                e.push(&format!("{name}.propagated_labels"), c.propagated_labels);
            }
        }
        e.0
    }

    /// [`RunConfig::training_entries`] plus the evaluation protocol.
    pub fn eval_entries(&self, method: Method) -> Vec<(String, String)> {
        let mut e = Entries(self.training_entries(method));
        e.push("eval.runs", self.eval.runs);
        let q: Vec<String> = self.eval.quantiles.iter().map(u32::to_string).collect();
        e.push("eval.quantiles", q.join(","));
        e.0
    }
}

#[derive(Default)]
struct Entries(Vec<(String, String)>);

impl Entries {
    fn push(&mut self, key: &str, value: impl Display) {
        self.0.push((key.to_string(), value.to_string()));
    }
}

/// `key=value` lines of `entries`.
pub fn render_entries(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}
