use std::collections::BTreeSet;

use super::{Clustering, TypingError};
use crate::catalog::Catalog;

/// Type-level garment labels: a garment is positive for a type if any body
/// of that type was observed wearing it, negative otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedLabels {
    pub positives: Vec<BTreeSet<usize>>,
    pub negatives: Vec<BTreeSet<usize>>,
}

impl PropagatedLabels {
    pub fn num_types(&self) -> usize {
        self.positives.len()
    }

    pub fn is_positive(&self, type_index: usize, garment: usize) -> bool {
        self.positives[type_index].contains(&garment)
    }

    /// Number of distinct types whose positive set contains `garment`.
    pub fn versatility(&self, garment: usize) -> usize {
        self.positives.iter().filter(|p| p.contains(&garment)).count()
    }
}

pub fn propagate_labels(catalog: &Catalog, clustering: &Clustering) -> Result<PropagatedLabels, TypingError> {
    clustering.check_covers(catalog)?;
    let mut positives = vec![BTreeSet::new(); clustering.k];
    for &(b, g) in catalog.positives() {
        positives[clustering.type_of(b)].insert(g);
    }
    let negatives = positives
        .iter()
        .map(|pos| (0..catalog.garments().len()).filter(|g| !pos.contains(g)).collect())
        .collect();
    Ok(PropagatedLabels { positives, negatives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{BodyRecord, FeatureStats, GarmentCategory, GarmentRecord};
    use proptest::prelude::*;

    fn tiny_catalog(nb: usize, ng: usize, positives: &[(usize, usize)]) -> Catalog {
        let bodies = (0..nb)
            .map(|i| BodyRecord::new(format!("b{i}"), [i as f64; 10], [160.0, 90.0, 70.0, 95.0]).unwrap())
            .collect();
        let garments = (0..ng)
            .map(|i| GarmentRecord::new(format!("g{i}"), GarmentCategory::Dress, vec![i % 2 == 0], vec![0.0]).unwrap())
            .collect();
        Catalog::new(bodies, garments, positives.iter().copied(), vec!["a".into()]).unwrap()
    }

    fn clustering_for(catalog: &Catalog, assignment: Vec<usize>, k: usize) -> Clustering {
        Clustering {
            k,
            centroids: vec![vec![0.0; 14]; k],
            assignment,
            body_ids: catalog.bodies().iter().map(|b| b.id.clone()).collect(),
            feature_stats: FeatureStats {
                mean: vec![0.0; 14],
                std: vec![1.0; 14],
            },
        }
    }

    /// Direct transcription of the definitions, pair by pair.
    fn brute_force(catalog: &Catalog, clustering: &Clustering) -> PropagatedLabels {
        let ng = catalog.garments().len();
        let nb = catalog.bodies().len();
        let mut positives = vec![BTreeSet::new(); clustering.k];
        let mut negatives = vec![BTreeSet::new(); clustering.k];
        for t in 0..clustering.k {
            for g in 0..ng {
                let worn = (0..nb).any(|b| clustering.assignment[b] == t && catalog.positives().contains(&(b, g)));
                if worn {
                    positives[t].insert(g);
                } else {
                    negatives[t].insert(g);
                }
            }
        }
        PropagatedLabels { positives, negatives }
    }

    #[test]
    fn worked_example() {
        // b0, b1 in type 0; b2 in type 1; positives (b0, g0), (b2, g1)
        let c = tiny_catalog(3, 2, &[(0, 0), (2, 1)]);
        let labels = propagate_labels(&c, &clustering_for(&c, vec![0, 0, 1], 2)).unwrap();
        assert_eq!(labels.positives[0], BTreeSet::from([0]));
        assert_eq!(labels.negatives[0], BTreeSet::from([1]));
        assert_eq!(labels.positives[1], BTreeSet::from([1]));
        assert_eq!(labels.negatives[1], BTreeSet::from([0]));
    }

    #[test]
    fn garment_worn_by_every_type() {
        let c = tiny_catalog(3, 2, &[(0, 0), (2, 0)]);
        let labels = propagate_labels(&c, &clustering_for(&c, vec![0, 0, 1], 2)).unwrap();
        assert!(labels.positives.iter().all(|p| p.contains(&0)));
        assert!(labels.negatives.iter().all(|n| !n.contains(&0)));
        assert_eq!(labels.versatility(0), 2);
    }

    #[test]
    fn no_positives_means_all_negative() {
        let c = tiny_catalog(3, 4, &[]);
        let labels = propagate_labels(&c, &clustering_for(&c, vec![0, 1, 1], 2)).unwrap();
        assert!(labels.positives.iter().all(BTreeSet::is_empty));
        assert!(labels.negatives.iter().all(|n| n.len() == 4));
    }

    #[test]
    fn rejects_foreign_clustering() {
        let c = tiny_catalog(3, 1, &[]);
        let other = tiny_catalog(2, 1, &[]);
        assert!(propagate_labels(&c, &clustering_for(&other, vec![0, 0], 1)).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            nb in 1usize..=8,
            ng in 1usize..=12,
            k in 1usize..=3,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let positives: Vec<(usize, usize)> = (0..nb)
                .flat_map(|b| (0..ng).map(move |g| (b, g)))
                .filter(|_| rng.random_bool(0.3))
                .collect();
            let assignment = (0..nb).map(|_| rng.random_range(0..k)).collect();
            let c = tiny_catalog(nb, ng, &positives);
            let cl = clustering_for(&c, assignment, k);
            prop_assert_eq!(propagate_labels(&c, &cl).unwrap(), brute_force(&c, &cl));
        }
    }
}
