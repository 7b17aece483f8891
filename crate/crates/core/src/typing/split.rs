use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Clustering, PropagatedLabels, TypingError};
use crate::catalog::Catalog;

/// Evaluation scenarios by what the model has seen during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Training bodies against held-out garments.
    SeenBodyUnseenGarment,
    /// Held-out bodies against training garments.
    UnseenBodySeenGarment,
    /// Held-out bodies against held-out garments.
    UnseenBodyUnseenGarment,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::SeenBodyUnseenGarment,
        Scenario::UnseenBodySeenGarment,
        Scenario::UnseenBodyUnseenGarment,
    ];

    /// Short roman-numeral tag used in reports and metric keys.
    pub fn tag(self) -> &'static str {
        match self {
            Scenario::SeenBodyUnseenGarment => "i",
            Scenario::UnseenBodySeenGarment => "ii",
            Scenario::UnseenBodyUnseenGarment => "iii",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::SeenBodyUnseenGarment => "body seen, garment unseen",
            Scenario::UnseenBodySeenGarment => "body unseen, garment seen",
            Scenario::UnseenBodyUnseenGarment => "body unseen, garment unseen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub body: usize,
    pub garment: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub body_holdout: f64,
    pub garment_holdout: f64,
    pub min_heldout_bodies: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            body_holdout: 0.2,
            garment_holdout: 0.2,
            min_heldout_bodies: 2,
            seed: 0,
        }
    }
}

/// Train/test partition of bodies and garments plus the labeled evaluation
/// pairs of every scenario. Indices refer to the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub seed: u64,
    /// Type of every catalog body (copied from the clustering).
    pub body_types: Vec<usize>,
    pub train_bodies: Vec<usize>,
    pub test_bodies: Vec<usize>,
    /// Garments held out from each type's positive list.
    pub heldout_by_type: Vec<BTreeSet<usize>>,
    /// Union of all per-type holdouts; none of these is ever trained on.
    pub heldout: BTreeSet<usize>,
    pub train_garments: Vec<usize>,
    /// Per-type positives and negatives restricted to training garments.
    pub train_positives: Vec<Vec<usize>>,
    pub train_negatives: Vec<Vec<usize>>,
    scenario_pairs: [Vec<LabeledPair>; 3],
}

fn holdout_count(n: usize, fraction: f64) -> usize {
    // Guard against 0.2 * 15 = 3.0000000000000004 rounding up to 4.
    let raw = n as f64 * fraction;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

pub fn build_split(
    catalog: &Catalog,
    labels: &PropagatedLabels,
    clustering: &Clustering,
    config: &SplitConfig,
) -> Result<Split, TypingError> {
    clustering.check_covers(catalog)?;
    if labels.num_types() != clustering.k {
        return Err(TypingError::Mismatch(format!(
            "labels cover {} types, clustering has {}",
            labels.num_types(),
            clustering.k
        )));
    }
    for (name, f) in [("body", config.body_holdout), ("garment", config.garment_holdout)] {
        if !(0.0..1.0).contains(&f) {
            return Err(TypingError::Mismatch(format!("{name} holdout fraction {f} outside [0, 1)")));
        }
    }
    let members = clustering.members();
    let min_size = config.min_heldout_bodies + 1;
    if let Some((t, m)) = members.iter().enumerate().find(|(_, m)| m.len() < min_size) {
        return Err(TypingError::TypeTooSmall {
            type_index: t,
            size: m.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut test_bodies = Vec::new();
    for m in &members {
        let h = holdout_count(m.len(), config.body_holdout).max(config.min_heldout_bodies);
        let mut shuffled = m.clone();
        shuffled.shuffle(&mut rng);
        test_bodies.extend_from_slice(&shuffled[..h]);
    }
    let mut heldout_by_type = Vec::with_capacity(clustering.k);
    for pos in &labels.positives {
        let h = holdout_count(pos.len(), config.garment_holdout);
        let mut shuffled: Vec<usize> = pos.iter().copied().collect();
        shuffled.shuffle(&mut rng);
        heldout_by_type.push(shuffled[..h].iter().copied().collect());
    }
    let test: BTreeSet<usize> = test_bodies.into_iter().collect();
    let train_bodies = (0..catalog.bodies().len()).filter(|b| !test.contains(b)).collect();
    Split::from_partitions(
        catalog,
        labels,
        clustering,
        config.seed,
        train_bodies,
        test.into_iter().collect(),
        heldout_by_type,
    )
}

impl Split {
    /// Assembles a split from explicit partitions (used when loading a
    /// persisted split), deriving the training sets and scenario pairs.
    pub fn from_partitions(
        catalog: &Catalog,
        labels: &PropagatedLabels,
        clustering: &Clustering,
        seed: u64,
        mut train_bodies: Vec<usize>,
        mut test_bodies: Vec<usize>,
        heldout_by_type: Vec<BTreeSet<usize>>,
    ) -> Result<Self, TypingError> {
        clustering.check_covers(catalog)?;
        let nb = catalog.bodies().len();
        let ng = catalog.garments().len();
        train_bodies.sort_unstable();
        test_bodies.sort_unstable();
        let mut seen = vec![0u8; nb];
        for &b in train_bodies.iter().chain(&test_bodies) {
            if b >= nb {
                return Err(TypingError::Mismatch(format!("body index {b} out of range")));
            }
            seen[b] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(TypingError::Mismatch("train and test bodies must partition the catalog".into()));
        }
        if heldout_by_type.len() != clustering.k {
            return Err(TypingError::Mismatch("held-out garments not given for every type".into()));
        }
        let heldout: BTreeSet<usize> = heldout_by_type.iter().flatten().copied().collect();
        if heldout.iter().any(|&g| g >= ng) {
            return Err(TypingError::Mismatch("held-out garment index out of range".into()));
        }
        let train_garments: Vec<usize> = (0..ng).filter(|g| !heldout.contains(g)).collect();
        let keep = |set: &BTreeSet<usize>| set.iter().copied().filter(|g| !heldout.contains(g)).collect::<Vec<_>>();
        let train_positives = labels.positives.iter().map(keep).collect();
        let train_negatives = labels.negatives.iter().map(keep).collect();
        let body_types = clustering.assignment.clone();

        let pairs = |bodies: &[usize], garments: &[usize]| {
            let mut out = Vec::with_capacity(bodies.len() * garments.len());
            for &b in bodies {
                for &g in garments {
                    out.push(LabeledPair {
                        body: b,
                        garment: g,
                        positive: labels.is_positive(body_types[b], g),
                    });
                }
            }
            out
        };
        let heldout_list: Vec<usize> = heldout.iter().copied().collect();
        let scenario_pairs = [
            pairs(&train_bodies, &heldout_list),
            pairs(&test_bodies, &train_garments),
            pairs(&test_bodies, &heldout_list),
        ];
        Ok(Self {
            seed,
            body_types,
            train_bodies,
            test_bodies,
            heldout_by_type,
            heldout,
            train_garments,
            train_positives,
            train_negatives,
            scenario_pairs,
        })
    }

    pub fn pairs(&self, scenario: Scenario) -> &[LabeledPair] {
        let i = match scenario {
            Scenario::SeenBodyUnseenGarment => 0,
            Scenario::UnseenBodySeenGarment => 1,
            Scenario::UnseenBodyUnseenGarment => 2,
        };
        &self.scenario_pairs[i]
    }

    pub fn num_types(&self) -> usize {
        self.train_positives.len()
    }

    pub fn is_test_body(&self, body: usize) -> bool {
        self.test_bodies.binary_search(&body).is_ok()
    }

    /// Whether a (body, garment) combination may appear in training.
    pub fn is_trainable(&self, body: usize, garment: usize) -> bool {
        !self.is_test_body(body) && !self.heldout.contains(&garment)
    }

    /// Training bodies of each type.
    pub fn train_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_types()];
        for &b in &self.train_bodies {
            out[self.body_types[b]].push(b);
        }
        out
    }
}
