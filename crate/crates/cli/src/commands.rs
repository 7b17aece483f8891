//! Subcommand implementations. Each reads its inputs, never modifies them,
//! and writes outputs atomically.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use vibe_core::catalog::{load_dataset, read_body_file, save_dataset, write_atomic, write_catalog, BodyRecord, Catalog};
use vibe_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use vibe_core::eval::{
    evaluate_scenarios_parallel, format_table, preference_auc, read_preference_pairs, write_metrics, MetricsRecord,
};
use vibe_core::explain::explain_report;
use vibe_core::method::{Method, TrainedModel};
use vibe_core::typing::{build_split, cluster_bodies, propagate_labels, read_clustering, write_clustering, Clustering};

use crate::config::{render_entries, RunConfig};
use crate::failure::{Classify, Failure};

/// Checkpoint key holding the hash of the catalog the model was trained on.
const DATA_HASH_KEY: &str = "data.sha256";

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes()).data_err(|| format!("writing {}", path.display()))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).data_err(|| format!("reading {}", path.display()))
}

fn load_catalog_dir(dir: &Path) -> Result<Catalog, Failure> {
    load_dataset(dir).data_err(|| format!("loading dataset {}", dir.display()))
}

fn catalog_hash(catalog: &Catalog) -> String {
    hex::encode(Sha256::digest(write_catalog(catalog).as_bytes()))
}

fn load_or_cluster(config: &RunConfig, catalog: &Catalog, path: Option<&Path>) -> Result<Clustering, Failure> {
    match path {
        Some(p) => {
            let file = fs::File::open(p).data_err(|| format!("opening clustering {}", p.display()))?;
            let clustering = read_clustering(BufReader::new(file)).data_err(|| format!("reading {}", p.display()))?;
            clustering.check_covers(catalog).data_err(|| p.display().to_string())?;
            Ok(clustering)
        }
        None => cluster_bodies(catalog, &config.cluster_config()).numeric_err(|| "clustering bodies".into()),
    }
}

fn load_model(path: &Path, catalog: &Catalog) -> Result<Checkpoint, Failure> {
    let checkpoint = read_checkpoint(&read_file(path)?, None).data_err(|| path.display().to_string())?;
    let trained_on = checkpoint.config.iter().find(|(k, _)| k == DATA_HASH_KEY).map(|(_, v)| v.as_str());
    if trained_on.is_some_and(|h| h != catalog_hash(catalog)) {
        log::warn!(
            "{} was trained on a different catalog; catalog-indexed model state may not line up",
            path.display()
        );
    }
    Ok(checkpoint)
}

/// Writes a synthetic catalog with its oracle and planted labels.
pub fn gen_data(config: &RunConfig, out: &Path, noise_free: bool) -> Result<String, Failure> {
    let spec = if noise_free {
        config.synthetic.clone().noise_free()
    } else {
        config.synthetic.clone()
    };
    let catalog = vibe_core::catalog::generate_synthetic(&spec).usage_err(|| "generating catalog".into())?;
    let paths = save_dataset(&catalog, out).data_err(|| format!("writing dataset to {}", out.display()))?;
    Ok(format!(
        "wrote {} bodies, {} garments, {} positives to {} (oracle {}, planted {})\n",
        catalog.bodies().len(),
        catalog.garments().len(),
        catalog.positives().len(),
        paths.catalog.display(),
        paths.oracle.display(),
        paths.planted.display()
    ))
}

pub fn cluster(config: &RunConfig, data: &Path, out: &Path) -> Result<String, Failure> {
    let catalog = load_catalog_dir(data)?;
    let clustering = load_or_cluster(config, &catalog, None)?;
    write_file(out, &write_clustering(&clustering))?;
    let sizes: Vec<String> = clustering.members().iter().map(|m| m.len().to_string()).collect();
    Ok(format!(
        "{} body types (sizes {}) written to {}\n",
        clustering.k,
        sizes.join(", "),
        out.display()
    ))
}

pub struct TrainArgs<'a> {
    pub data: &'a Path,
    pub clustering: Option<&'a Path>,
    pub out: &'a Path,
    pub loss_out: Option<PathBuf>,
}

/// Trains one model on the seed's split; writes the checkpoint and its
/// per-epoch loss trajectory.
pub fn train(config: &RunConfig, args: &TrainArgs) -> Result<String, Failure> {
    let catalog = load_catalog_dir(args.data)?;
    let clustering = load_or_cluster(config, &catalog, args.clustering)?;
    let labels = propagate_labels(&catalog, &clustering).data_err(|| "propagating labels".into())?;
    let split = build_split(&catalog, &labels, &clustering, &config.split_config()).data_err(|| "splitting".into())?;
    let method = config.method;
    let (model, losses) = config
        .trainer(method)
        .fit(&catalog, &split, config.seed)
        .numeric_err(|| format!("training {method}"))?;

    let mut entries = config.training_entries(method);
    entries.push((DATA_HASH_KEY.into(), catalog_hash(&catalog)));
    let checkpoint = Checkpoint {
        method,
        config: entries,
        model,
    };
    let text = write_checkpoint(&checkpoint).numeric_err(|| "encoding checkpoint".into())?;
    write_file(args.out, &text)?;

    let loss_path = args.loss_out.clone().unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".loss");
        PathBuf::from(p)
    });
    let mut trajectory = String::from("# epoch loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        trajectory.push_str(&format!("{epoch} {loss}\n"));
    }
    write_file(&loss_path, &trajectory)?;
    Ok(format!(
        "trained {method} for {} epochs (final loss {}); checkpoint {}, loss trajectory {}\n",
        losses.len(),
        losses.last().map_or("n/a".into(), |l| format!("{l:.6}")),
        args.out.display(),
        loss_path.display()
    ))
}

pub struct EvalArgs<'a> {
    pub data: &'a Path,
    pub clustering: Option<&'a Path>,
    pub methods: &'a [Method],
    pub out: &'a Path,
    /// Human preference triples plus the checkpoint to rank them with.
    pub preferences: Option<(&'a Path, &'a Path)>,
}

/// Runs the cold-start protocol for every method and writes the metrics
/// file; returns the summary table.
pub fn eval(config: &RunConfig, args: &EvalArgs) -> Result<String, Failure> {
    let catalog = load_catalog_dir(args.data)?;
    let clustering = load_or_cluster(config, &catalog, args.clustering)?;
    let labels = propagate_labels(&catalog, &clustering).data_err(|| "propagating labels".into())?;
    let eval_config = config.eval_config();

    let mut records = Vec::new();
    for &method in args.methods {
        log::info!("evaluating {method} over {} runs", eval_config.runs);
        let report = evaluate_scenarios_parallel(
            method.tag(),
            &config.trainer(method),
            &catalog,
            &clustering,
            &labels,
            &eval_config,
            config.jobs,
        )
        .map_err(|e| match e {
            vibe_core::eval::EvalError::Training { .. } | vibe_core::eval::EvalError::NonFiniteScore(_) => {
                Failure::Numeric(anyhow::anyhow!("evaluating {method}: {e}"))
            }
            other => Failure::Data(anyhow::anyhow!("evaluating {method}: {other}")),
        })?;
        records.push(MetricsRecord::new(report, &render_entries(&config.eval_entries(method))));
    }
    let mut metrics = write_metrics(&records);
    let reports: Vec<_> = records.into_iter().map(|r| r.report).collect();
    let mut summary = format_table(&reports);

    if let Some((pairs_path, checkpoint_path)) = args.preferences {
        let file = fs::File::open(pairs_path).data_err(|| format!("opening {}", pairs_path.display()))?;
        let pairs = read_preference_pairs(BufReader::new(file)).data_err(|| pairs_path.display().to_string())?;
        let checkpoint = load_model(checkpoint_path, &catalog)?;
        let value = preference_auc(&catalog, &pairs, |b, g| checkpoint.model.score(&catalog, b, g))
            .data_err(|| format!("scoring {}", pairs_path.display()))?;
        let tag = checkpoint.method.tag();
        metrics.push_str(&format!("{tag}.preference.auc={value}\n{tag}.preference.pairs={}\n", pairs.len()));
        summary.push_str(&format!("preference AUC ({tag}, {} triples): {value:.4}\n", pairs.len()));
    }
    write_file(args.out, &metrics)?;
    summary.push_str(&format!("metrics written to {}\n", args.out.display()));
    Ok(summary)
}

/// Who to recommend for: a body file or a catalog body id.
pub enum BodySource<'a> {
    File(&'a Path),
    CatalogId(&'a str),
}

fn resolve_body(source: &BodySource, catalog: &Catalog) -> Result<(BodyRecord, Option<usize>), Failure> {
    match source {
        BodySource::File(p) => {
            let file = fs::File::open(p).data_err(|| format!("opening body file {}", p.display()))?;
            let body = read_body_file(BufReader::new(file)).data_err(|| p.display().to_string())?;
            // A body that is also in the catalog keeps its learned state.
            let index = catalog.body_index(&body.id).filter(|&i| *catalog.body(i) == body);
            Ok((body, index))
        }
        BodySource::CatalogId(id) => {
            let i = catalog
                .body_index(id)
                .ok_or_else(|| Failure::data(format!("no body {id:?} in the catalog")))?;
            Ok((catalog.body(i).clone(), Some(i)))
        }
    }
}

/// The `top` best-scoring catalog garments for a body.
pub fn recommend(
    data: &Path,
    checkpoint: &Path,
    body: &BodySource,
    top: usize,
) -> Result<String, Failure> {
    let catalog = load_catalog_dir(data)?;
    let checkpoint = load_model(checkpoint, &catalog)?;
    let (body, index) = resolve_body(body, &catalog)?;
    let mut scored = (0..catalog.garments().len())
        .map(|g| Ok((checkpoint.model.score_body(&body, index, &catalog, g)?, g)))
        .collect::<Result<Vec<(f64, usize)>, String>>()
        .data_err(|| "scoring garments".into())?;
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Failure::Numeric(anyhow::anyhow!("model produced a non-finite score")));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out = format!("# top {} garments for {} ({})\n", top.min(scored.len()), body.id, checkpoint.method);
    for (rank, (score, g)) in scored.iter().take(top).enumerate() {
        out.push_str(&format!("{} {} {score:.6}\n", rank + 1, catalog.garment(*g).id));
    }
    Ok(out)
}

pub enum ExplainFormat {
    Text,
    KeyValue,
}

/// Attribute report for a body from an embedding checkpoint.
pub fn explain(
    config: &RunConfig,
    data: &Path,
    checkpoint: &Path,
    body: &BodySource,
    format: ExplainFormat,
) -> Result<String, Failure> {
    let catalog = load_catalog_dir(data)?;
    let checkpoint = load_model(checkpoint, &catalog)?;
    let TrainedModel::Embedding(model) = &checkpoint.model else {
        return Err(Failure::usage(format!(
            "explain needs an embedding checkpoint ({} or {}), got {}",
            Method::Vibe,
            Method::AgnosticEmbed,
            checkpoint.method
        )));
    };
    let (body, _) = resolve_body(body, &catalog)?;
    let report = explain_report(model, &body, &catalog, &config.explain).numeric_err(|| format!("explaining {}", body.id))?;
    Ok(match format {
        ExplainFormat::Text => report.to_text(),
        ExplainFormat::KeyValue => report.to_key_values(),
    })
}
