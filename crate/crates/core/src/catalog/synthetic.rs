//! Synthetic catalogs with a planted body-type structure.
//!
//! Bodies are drawn around per-type centroids. Each garment is compatible
//! with a random subset of types and carries one indicator block of
//! attributes per compatible type; visual features are a fixed random linear
//! map of the clean attribute vector plus noise. The oracle marks a pair
//! compatible iff the body's type is in the garment's subset, and observed
//! positives are a random subsample of the oracle-true pairs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{
    BodyRecord, Catalog, CatalogError, GarmentCategory, GarmentRecord, Oracle, PlantedTypes, SMPL_DIM, VITALS_DIM,
};

/// Population means of height, bust, waist and hips (cm).
const BASE_VITALS: [f64; VITALS_DIM] = [165.0, 90.0, 72.0, 98.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_types: usize,
    pub bodies_per_type: Vec<usize>,
    pub num_garments: usize,
    /// Relative weight of a garment being compatible with exactly
    /// `1, 2, ..., num_types` types.
    pub versatility_distribution: Vec<f64>,
    /// Per-coordinate standard deviation of bodies around their type centroid.
    pub body_noise: f64,
    /// Spread of type centroids in shape space.
    pub type_separation: f64,
    /// Centimetres of vital-statistic variation per unit of shape coefficient.
    pub vitals_scale: f64,
    pub attribute_dim: usize,
    /// Attributes reserved per type as its indicator block.
    pub indicator_block: usize,
    pub attribute_noise_flip_rate: f64,
    /// Probability that a non-indicator attribute is set.
    pub filler_rate: f64,
    pub visual_dim: usize,
    pub visual_noise: f64,
    pub observation_rate: f64,
    pub category: GarmentCategory,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_types: 5,
            bodies_per_type: vec![23, 9, 14, 6, 8],
            num_garments: 400,
            versatility_distribution: vec![0.3, 0.4, 0.15, 0.1, 0.05],
            body_noise: 0.35,
            type_separation: 1.0,
            vitals_scale: 3.0,
            attribute_dim: GarmentCategory::Dress.default_attribute_count(),
            indicator_block: 4,
            attribute_noise_flip_rate: 0.15,
            filler_rate: 0.3,
            visual_dim: 32,
            visual_noise: 1.0,
            observation_rate: 0.2,
            category: GarmentCategory::Dress,
            seed: 2020,
        }
    }
}

impl SyntheticSpec {
    /// Same layout without body, attribute or visual noise and without
    /// missing positives: every oracle-compatible pair is observed.
    pub fn noise_free(mut self) -> Self {
        self.body_noise = 0.0;
        self.attribute_noise_flip_rate = 0.0;
        self.visual_noise = 0.0;
        self.observation_rate = 1.0;
        self
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let fail = |m: String| Err(CatalogError::InvalidSpec(m));
        if self.num_types == 0 {
            return fail("num_types must be positive".into());
        }
        if self.bodies_per_type.len() != self.num_types {
            return fail(format!(
                "bodies_per_type has {} entries for {} types",
                self.bodies_per_type.len(),
                self.num_types
            ));
        }
        if let Some(t) = self.bodies_per_type.iter().position(|&n| n == 0) {
            return fail(format!("type {t} has no bodies"));
        }
        if self.num_garments == 0 {
            return fail("num_garments must be positive".into());
        }
        if self.versatility_distribution.len() != self.num_types {
            return fail("versatility_distribution needs one weight per subset size".into());
        }
        if self.versatility_distribution.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || self.versatility_distribution.iter().sum::<f64>() <= 0.0
        {
            return fail("versatility weights must be non-negative with a positive sum".into());
        }
        if self.indicator_block == 0 || self.num_types * self.indicator_block > self.attribute_dim {
            return fail(format!(
                "{} types x {} indicator attributes do not fit in {} attributes",
                self.num_types, self.indicator_block, self.attribute_dim
            ));
        }
        for (name, p) in [
            ("attribute_noise_flip_rate", self.attribute_noise_flip_rate),
            ("filler_rate", self.filler_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.observation_rate > 0.0 && self.observation_rate <= 1.0) {
            return fail("observation_rate must lie in (0, 1]".into());
        }
        for (name, v) in [
            ("body_noise", self.body_noise),
            ("type_separation", self.type_separation),
            ("vitals_scale", self.vitals_scale),
            ("visual_noise", self.visual_noise),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be a finite non-negative number"));
            }
        }
        if self.visual_dim == 0 {
            return fail("visual_dim must be positive".into());
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sd
}

/// Generates a catalog carrying its oracle and planted labels.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Catalog, CatalogError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.num_types;

    // Type centroids in shape space, vitals correlated through a fixed map.
    let centroids: Vec<[f64; SMPL_DIM]> = (0..k)
        .map(|_| std::array::from_fn(|_| gaussian(&mut rng, spec.type_separation)))
        .collect();
    let coupling: Vec<[f64; SMPL_DIM]> = (0..VITALS_DIM)
        .map(|_| std::array::from_fn(|_| gaussian(&mut rng, spec.vitals_scale / (SMPL_DIM as f64).sqrt())))
        .collect();
    let vitals_centroids: Vec<[f64; VITALS_DIM]> = centroids
        .iter()
        .map(|c| {
            std::array::from_fn(|d| BASE_VITALS[d] + coupling[d].iter().zip(c).map(|(w, x)| w * x).sum::<f64>())
        })
        .collect();

    let mut bodies = Vec::new();
    let mut body_types = Vec::new();
    for (t, &count) in spec.bodies_per_type.iter().enumerate() {
        for _ in 0..count {
            let smpl = std::array::from_fn(|d| centroids[t][d] + gaussian(&mut rng, spec.body_noise));
            let vitals =
                std::array::from_fn(|d| vitals_centroids[t][d] + gaussian(&mut rng, spec.body_noise * spec.vitals_scale));
            let id = format!("b{:03}", bodies.len());
            bodies.push(BodyRecord::new(id, smpl, vitals)?);
            body_types.push(t);
        }
    }

    let a = spec.attribute_dim;
    let block = spec.indicator_block;
    let indicator_attributes: Vec<Vec<usize>> = (0..k).map(|t| (t * block..(t + 1) * block).collect()).collect();
    let mut vocabulary = Vec::with_capacity(a);
    for t in 0..k {
        for j in 0..block {
            vocabulary.push(format!("type{t}_cue{j}"));
        }
    }
    for f in 0..a - k * block {
        vocabulary.push(format!("style{f:02}"));
    }

    let projection_sd = 1.0 / (a as f64).sqrt();
    let projection: Vec<Vec<f64>> = (0..spec.visual_dim)
        .map(|_| (0..a).map(|_| gaussian(&mut rng, projection_sd)).collect())
        .collect();
    let versatility = WeightedIndex::new(&spec.versatility_distribution)
        .map_err(|e| CatalogError::InvalidSpec(e.to_string()))?;
    let visual_noise = Normal::new(0.0, spec.visual_noise).map_err(|e| CatalogError::InvalidSpec(e.to_string()))?;

    let mut garments = Vec::with_capacity(spec.num_garments);
    let mut garment_types = Vec::with_capacity(spec.num_garments);
    for gi in 0..spec.num_garments {
        let size = versatility.sample(&mut rng) + 1;
        let mut types: Vec<usize> = sample(&mut rng, k, size).into_iter().collect();
        types.sort_unstable();

        let mut clean = vec![false; a];
        for &t in &types {
            for &i in &indicator_attributes[t] {
                clean[i] = true;
            }
        }
        for bit in clean.iter_mut().skip(k * block) {
            *bit = rng.random_bool(spec.filler_rate);
        }
        let mut attributes = clean.clone();
        for bit in attributes.iter_mut().take(k * block) {
            if rng.random_bool(spec.attribute_noise_flip_rate) {
                *bit = !*bit;
            }
        }
        let visual = projection
            .iter()
            .map(|row| {
                let signal: f64 = row.iter().zip(&clean).filter(|(_, &c)| c).map(|(w, _)| w).sum();
                signal + visual_noise.sample(&mut rng)
            })
            .collect();
        garments.push(GarmentRecord::new(format!("g{gi:04}"), spec.category, attributes, visual)?);
        garment_types.push(types);
    }

    let (nb, ng) = (bodies.len(), garments.len());
    let mut compatible = vec![false; nb * ng];
    let mut positives = Vec::new();
    for b in 0..nb {
        for g in 0..ng {
            if garment_types[g].contains(&body_types[b]) {
                compatible[b * ng + g] = true;
                if spec.observation_rate >= 1.0 || rng.random_bool(spec.observation_rate) {
                    positives.push((b, g));
                }
            }
        }
    }

    Catalog::new(bodies, garments, positives, vocabulary)?
        .with_oracle(Oracle::new(nb, ng, compatible)?)?
        .with_planted(PlantedTypes {
            body_types,
            garment_types,
            indicator_attributes,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::io::{write_catalog, write_oracle, write_planted};

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            num_types: 3,
            bodies_per_type: vec![4, 3, 5],
            num_garments: 30,
            versatility_distribution: vec![1.0, 1.0, 0.5],
            attribute_dim: 20,
            visual_dim: 6,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(write_catalog(&a), write_catalog(&b));
        assert_eq!(write_oracle(&a), write_oracle(&b));
        assert_eq!(write_planted(&a), write_planted(&b));
        let c = generate_synthetic(&SyntheticSpec { seed: 9, ..small() }).unwrap();
        assert_ne!(write_catalog(&a), write_catalog(&c));
    }

    #[test]
    fn full_observation_reveals_the_oracle() {
        let spec = SyntheticSpec {
            observation_rate: 1.0,
            ..small()
        };
        for c in [generate_synthetic(&spec).unwrap(), generate_synthetic(&small().noise_free()).unwrap()] {
            let oracle = c.oracle().unwrap();
            for b in 0..c.bodies().len() {
                for g in 0..c.garments().len() {
                    assert_eq!(oracle.is_compatible(b, g), c.positives().contains(&(b, g)));
                }
            }
        }
    }

    #[test]
    fn positives_are_oracle_true() {
        let c = generate_synthetic(&small()).unwrap();
        let oracle = c.oracle().unwrap();
        assert!(!c.positives().is_empty());
        assert!(c.positives().iter().all(|&(b, g)| oracle.is_compatible(b, g)));
    }

    #[test]
    fn fully_versatile_garments_fit_everyone() {
        let c = generate_synthetic(&SyntheticSpec {
            versatility_distribution: vec![0.0, 0.0, 1.0],
            ..small()
        })
        .unwrap();
        let oracle = c.oracle().unwrap();
        assert!((0..c.bodies().len()).all(|b| (0..c.garments().len()).all(|g| oracle.is_compatible(b, g))));
    }

    #[test]
    fn zero_noise_bodies_coincide_within_type() {
        let c = generate_synthetic(&small().noise_free()).unwrap();
        let types = &c.planted().unwrap().body_types;
        for i in 0..c.bodies().len() {
            for j in 0..c.bodies().len() {
                if types[i] == types[j] {
                    assert_eq!(c.body(i).features(), c.body(j).features());
                }
            }
        }
    }

    #[test]
    fn indicator_blocks_follow_types_without_noise() {
        let c = generate_synthetic(&small().noise_free()).unwrap();
        let planted = c.planted().unwrap();
        for (g, types) in c.garments().iter().zip(&planted.garment_types) {
            for (t, block) in planted.indicator_attributes.iter().enumerate() {
                assert!(block.iter().all(|&i| g.attributes[i] == types.contains(&t)));
            }
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        assert!(generate_synthetic(&SyntheticSpec {
            bodies_per_type: vec![4, 0, 5],
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            observation_rate: 0.0,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            attribute_dim: 5,
            ..small()
        })
        .is_err());
    }
}
