//! Built-in self-test: gradient checks, rank-statistic and label
//! propagation against brute force, checkpoint fidelity. Small instances
//! only, so it finishes in seconds.

use std::cell::RefCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vibe_core::catalog::{
    generate_synthetic, BodyRecord, Catalog, FeatureStats, GarmentCategory, GarmentRecord, StandardizationStats,
    SyntheticSpec,
};
use vibe_core::cf::{cf_train, pair_loss_and_gradient, CFTrainConfig, CfVariant};
use vibe_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use vibe_core::embed::{total_loss, total_loss_and_gradient, Margins, Triplet, TripletBatch, TripletKind, ViBEModel};
use vibe_core::eval::auc;
use vibe_core::method::{Method, TrainedModel};
use vibe_core::numkit::{grad_check, grad_check_values};
use vibe_core::typing::{build_split, cluster_bodies, propagate_labels, ClusterConfig, Clustering, SplitConfig};

const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

type Outcome = Result<(bool, String), String>;
type Check = fn() -> Outcome;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn tiny_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        bodies_per_type: vec![4, 4, 3, 3, 3],
        num_garments: 12,
        attribute_dim: 24,
        visual_dim: 3,
        seed,
        ..SyntheticSpec::default()
    }
}

fn catalog_stats(c: &Catalog) -> Result<StandardizationStats, String> {
    let fit = |rows: Vec<Vec<f64>>| FeatureStats::fit(&rows).map_err(err);
    Ok(StandardizationStats {
        smpl: fit(c.bodies().iter().map(|b| b.smpl.to_vec()).collect())?,
        vitals: fit(c.bodies().iter().map(|b| b.vitals.to_vec()).collect())?,
        visual: fit(c.garments().iter().map(|g| g.visual.clone()).collect())?,
    })
}

fn embedding_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..3 {
        let catalog = generate_synthetic(&tiny_spec(seed)).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = ViBEModel::random(24, 3, catalog_stats(&catalog)?, &mut rng).map_err(err)?;
        let inputs = model.encode(&catalog).map_err(err)?;
        let (nb, ng) = (catalog.bodies().len(), catalog.garments().len());
        let mut triplet = |kind, n: usize| Triplet {
            kind,
            anchor: rng.random_range(0..nb),
            positive: rng.random_range(0..n),
            negative: rng.random_range(0..n),
        };
        let batch = TripletBatch {
            body_cloth: (0..4).map(|_| triplet(TripletKind::BodyCloth, ng)).collect(),
            body_body: (0..4).map(|_| triplet(TripletKind::BodyBody, nb)).collect(),
        };
        let margins = Margins::default();
        let (_, analytic) = total_loss_and_gradient(&model, &inputs, &batch, margins).map_err(err)?;
        let scratch = RefCell::new(model.clone());
        let report = grad_check_values(
            |p: &[f64]| {
                let mut m = scratch.borrow_mut();
                m.set_params(p).expect("same parameter layout");
                total_loss(&m, &inputs, &batch, margins).map_or(f64::NAN, |l| l.total)
            },
            &analytic,
            &model.params(),
            STEP,
        );
        worst = worst.max(report.max_rel_error);
        checked += report.checked;
    }
    Ok((worst < TOLERANCE, format!("3 instances, {checked} components, max rel error {worst:.2e}")))
}

fn cf_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..2 {
        let catalog = generate_synthetic(&SyntheticSpec {
            num_garments: 15,
            ..tiny_spec(100 + seed)
        })
        .map_err(err)?;
        let clustering = cluster_bodies(&catalog, &ClusterConfig::default()).map_err(err)?;
        let labels = propagate_labels(&catalog, &clustering).map_err(err)?;
        let split = build_split(&catalog, &labels, &clustering, &SplitConfig::default()).map_err(err)?;
        for variant in [CfVariant::Agnostic, CfVariant::Aware] {
            let config = CFTrainConfig {
                epochs: 21,
                latent_dim: 3,
                side_dim: 2,
                seed,
                ..CFTrainConfig::for_variant(variant)
            };
            let mut model = cf_train(&config, &catalog, &split, variant).map_err(err)?.model;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params: Vec<f64> = model.params().iter().map(|_| rng.random_range(-0.5..0.5)).collect();
            model.set_params(&params).map_err(err)?;
            let pairs: Vec<(usize, usize, bool)> = (0..10)
                .map(|_| {
                    (
                        rng.random_range(0..catalog.bodies().len()),
                        rng.random_range(0..catalog.garments().len()),
                        rng.random_bool(0.5),
                    )
                })
                .collect();
            let report = grad_check(
                |p: &[f64]| {
                    let mut m = model.clone();
                    m.set_params(p).expect("same parameter layout");
                    pair_loss_and_gradient(&m, &catalog, &pairs)
                },
                &params,
                STEP,
            );
            worst = worst.max(report.max_rel_error);
            checked += report.checked;
        }
    }
    Ok((worst < TOLERANCE, format!("4 instances, {checked} components, max rel error {worst:.2e}")))
}

fn auc_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..200 {
        let levels = rng.random_range(1..=6);
        let mut draw = || -> Vec<f64> {
            let n = rng.random_range(1..=50);
            (0..n).map(|_| rng.random_range(0..levels) as f64).collect()
        };
        let (pos, neg) = (draw(), draw());
        let mut twice = 0u64;
        for p in &pos {
            for n in &neg {
                twice += u64::from(p > n) * 2 + u64::from(p == n);
            }
        }
        let brute = twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64);
        if auc(&pos, &neg).map_err(err)? != brute {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("200 tie-heavy instances, {mismatches} mismatches")))
}

fn propagation_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..200 {
        let nb = rng.random_range(1..=8);
        let ng = rng.random_range(1..=12);
        let k = rng.random_range(1..=3);
        let bodies: Vec<BodyRecord> = (0..nb)
            .map(|b| BodyRecord::new(format!("b{b}"), [b as f64; 10], [160.0, 90.0, 70.0, 95.0]))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let garments: Vec<GarmentRecord> = (0..ng)
            .map(|g| GarmentRecord::new(format!("g{g}"), GarmentCategory::Dress, vec![g % 2 == 0], vec![0.0]))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let rate = rng.random_range(0.0..0.6);
        let positives: Vec<(usize, usize)> = (0..nb)
            .flat_map(|b| (0..ng).map(move |g| (b, g)))
            .filter(|_| rng.random_bool(rate))
            .collect();
        let catalog = Catalog::new(bodies, garments, positives, vec!["a".into()]).map_err(err)?;
        let assignment: Vec<usize> = (0..nb).map(|_| rng.random_range(0..k)).collect();
        let clustering = Clustering {
            k,
            centroids: vec![vec![0.0; 14]; k],
            assignment: assignment.clone(),
            body_ids: catalog.bodies().iter().map(|b| b.id.clone()).collect(),
            feature_stats: FeatureStats {
                mean: vec![0.0; 14],
                std: vec![1.0; 14],
            },
        };
        let labels = propagate_labels(&catalog, &clustering).map_err(err)?;
        for t in 0..k {
            for g in 0..ng {
                let worn = (0..nb).any(|b| assignment[b] == t && catalog.positives().contains(&(b, g)));
                if labels.positives[t].contains(&g) != worn || labels.negatives[t].contains(&g) == worn {
                    mismatches += 1;
                }
            }
        }
    }
    Ok((mismatches == 0, format!("200 instances, {mismatches} label mismatches")))
}

fn checkpoint_fidelity() -> Outcome {
    let catalog = generate_synthetic(&tiny_spec(9)).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = ViBEModel::random(24, 3, catalog_stats(&catalog)?, &mut rng).map_err(err)?;
    let original = Checkpoint {
        method: Method::Vibe,
        config: vec![("seed".into(), "9".into())],
        model: TrainedModel::Embedding(model),
    };
    let text = write_checkpoint(&original).map_err(err)?;
    let back = read_checkpoint(&text, Some(Method::Vibe)).map_err(err)?;
    let mut identical = back == original;
    for b in 0..catalog.bodies().len() {
        for g in 0..catalog.garments().len() {
            let (x, y) = (original.model.score(&catalog, b, g)?, back.model.score(&catalog, b, g)?);
            identical &= x.to_bits() == y.to_bits();
        }
    }
    // Flip one digit of the last parameter line.
    let mut corrupted = text.trim_end().to_string();
    let last = corrupted.pop().ok_or("empty checkpoint")?;
    corrupted.push(if last == '1' { '2' } else { '1' });
    let corruption_caught = read_checkpoint(&corrupted, None).is_err();
    let tag_checked = read_checkpoint(&text, Some(Method::CfAware)).is_err();
    Ok((
        identical && corruption_caught && tag_checked,
        format!(
            "round trip bit-identical: {identical}; corruption rejected: {corruption_caught}; \
             method tag enforced: {tag_checked}"
        ),
    ))
}

/// Runs every check; returns the report and whether all passed.
pub fn run() -> (String, bool) {
    let checks: [(&str, Check); 5] = [
        ("embedding loss gradient", embedding_gradient),
        ("CF loss gradient", cf_gradient),
        ("AUC equals brute force", auc_brute_force),
        ("label propagation equals brute force", propagation_brute_force),
        ("checkpoint fidelity", checkpoint_fidelity),
    ];
    let mut out = String::new();
    let mut all = true;
    for (name, check) in checks {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= ok;
        out.push_str(&format!(
            "{} {name}: {detail} ({:.2}s)\n",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        ));
    }
    out.push_str(if all { "all checks passed\n" } else { "some checks FAILED\n" });
    (out, all)
}
