use vibe_core::catalog::{generate_synthetic, load_dataset, save_dataset, Catalog, SyntheticSpec};
use vibe_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use vibe_core::eval::{evaluate_scenarios, evaluate_scenarios_parallel, EvalConfig, PairScorer, Trainer};
use vibe_core::method::{Method, MethodTrainer};
use vibe_core::typing::{
    adjusted_rand_index, build_split, cluster_bodies, propagate_labels, ClusterConfig, LabeledPair, Scenario, Split,
    SplitConfig,
};

fn small(spec: SyntheticSpec) -> SyntheticSpec {
    SyntheticSpec {
        num_garments: 120,
        ..spec
    }
}

/// Scores with the generator's ground truth, or a constant.
#[derive(Clone, Copy)]
enum Fixed {
    Oracle,
    Constant,
}

impl PairScorer for Fixed {
    fn score_pairs(&self, catalog: &Catalog, pairs: &[LabeledPair]) -> Result<Vec<f64>, String> {
        let oracle = catalog.oracle().ok_or("no oracle")?;
        Ok(pairs
            .iter()
            .map(|p| match self {
                Fixed::Oracle => f64::from(u8::from(oracle.is_compatible(p.body, p.garment))),
                Fixed::Constant => 0.25,
            })
            .collect())
    }
}

impl Trainer for Fixed {
    type Scorer = Fixed;

    fn train(&self, _: &Catalog, _: &Split, _: u64) -> Result<Fixed, String> {
        Ok(*self)
    }
}

#[test]
fn dataset_survives_the_file_round_trip() {
    let catalog = generate_synthetic(&small(SyntheticSpec::default())).unwrap();
    let dir = std::env::temp_dir().join(format!("vibe-pipeline-{}", std::process::id()));
    save_dataset(&catalog, &dir).unwrap();
    let back = load_dataset(&dir).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back, catalog);
}

#[test]
fn oracle_scores_perfectly_and_constants_score_one_half() {
    let catalog = generate_synthetic(&small(SyntheticSpec::default().noise_free())).unwrap();
    let clustering = cluster_bodies(&catalog, &ClusterConfig::default()).unwrap();
    let planted = &catalog.planted().unwrap().body_types;
    assert_eq!(adjusted_rand_index(&clustering.assignment, planted), 1.0);
    let labels = propagate_labels(&catalog, &clustering).unwrap();
    let config = EvalConfig {
        runs: 3,
        ..EvalConfig::default()
    };
    let oracle = evaluate_scenarios("oracle", &Fixed::Oracle, &catalog, &clustering, &labels, &config).unwrap();
    let constant = evaluate_scenarios("constant", &Fixed::Constant, &catalog, &clustering, &labels, &config).unwrap();
    for scenario in [
        Scenario::SeenBodyUnseenGarment,
        Scenario::UnseenBodySeenGarment,
        Scenario::UnseenBodyUnseenGarment,
    ] {
        let o = oracle.get(scenario).unwrap();
        assert_eq!((o.mean, o.std, o.runs.len()), (1.0, 0.0, 3), "{scenario:?}");
        assert_eq!(constant.get(scenario).unwrap().mean, 0.5);
    }
    assert!(oracle.mean_quantile_curve().iter().all(|&(_, a)| a == 1.0));
}

#[test]
fn parallel_evaluation_matches_serial() {
    let catalog = generate_synthetic(&small(SyntheticSpec::default())).unwrap();
    let clustering = cluster_bodies(&catalog, &ClusterConfig::default()).unwrap();
    let labels = propagate_labels(&catalog, &clustering).unwrap();
    let mut trainer = MethodTrainer::new(Method::CfAware);
    trainer.cf_aware.epochs = 25;
    let config = EvalConfig {
        runs: 3,
        seed: 4,
        ..EvalConfig::default()
    };
    let serial = evaluate_scenarios("cf-aware", &trainer, &catalog, &clustering, &labels, &config).unwrap();
    let parallel = evaluate_scenarios_parallel("cf-aware", &trainer, &catalog, &clustering, &labels, &config, 3).unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn trained_models_round_trip_through_checkpoints() {
    let catalog = generate_synthetic(&small(SyntheticSpec::default())).unwrap();
    let clustering = cluster_bodies(&catalog, &ClusterConfig::default()).unwrap();
    let labels = propagate_labels(&catalog, &clustering).unwrap();
    let split = build_split(&catalog, &labels, &clustering, &SplitConfig::default()).unwrap();
    for method in Method::ALL {
        let mut trainer = MethodTrainer::new(method);
        trainer.vibe.epochs = 5;
        trainer.vibe.schedule = vec![(3, 0.3)];
        trainer.agnostic_embed.epochs = 5;
        trainer.agnostic_embed.schedule = vec![(3, 0.3)];
        trainer.cf_agnostic.epochs = 22;
        trainer.cf_aware.epochs = 22;
        let (model, losses) = trainer.fit(&catalog, &split, 1).unwrap();
        assert!(!losses.is_empty() && losses.iter().all(|l| l.is_finite()), "{method}");
        let checkpoint = Checkpoint {
            method,
            config: vec![("seed".into(), "1".into())],
            model,
        };
        let back = read_checkpoint(&write_checkpoint(&checkpoint).unwrap(), Some(method)).unwrap();
        assert_eq!(back, checkpoint, "{method}");
    }
}
