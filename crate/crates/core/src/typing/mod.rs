//! Body-type quantization, label propagation and train/test splitting.

mod kmeans;
mod labels;
mod persist;
mod split;

pub use kmeans::{adjusted_rand_index, centroid_distances, kmeans_fit, nearest_centroid, KMeansFit};
pub use labels::{propagate_labels, PropagatedLabels};
pub use persist::{read_clustering, read_split, write_clustering, write_split};
pub use split::{build_split, LabeledPair, Scenario, Split, SplitConfig};

use thiserror::Error;

use crate::catalog::{BodyRecord, Catalog, FeatureStats};

#[derive(Debug, Error)]
pub enum TypingError {
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { k: usize, n: usize },
    #[error("type {type_index} has {size} bodies; at least 3 are needed to hold out two")]
    TypeTooSmall { type_index: usize, size: usize },
    #[error("{0}")]
    Mismatch(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Body types found by k-means over standardized shape + vital features.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    /// Centroids in standardized feature space.
    pub centroids: Vec<Vec<f64>>,
    /// Type of each catalog body, aligned with `body_ids`.
    pub assignment: Vec<usize>,
    pub body_ids: Vec<String>,
    /// Standardization of the 14-D body feature used for clustering.
    pub feature_stats: FeatureStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            max_iter: 300,
            restarts: 10,
        }
    }
}

impl Clustering {
    pub fn standardized_feature(&self, body: &BodyRecord) -> Vec<f64> {
        self.feature_stats.apply(&body.features())
    }

    /// Nearest centroid to an already standardized feature vector.
    pub fn assign_type(&self, feature: &[f64]) -> Result<usize, TypingError> {
        let dim = self.centroids[0].len();
        if feature.len() != dim {
            return Err(TypingError::Mismatch(format!(
                "feature has {} dimensions, centroids have {dim}",
                feature.len()
            )));
        }
        Ok(nearest_centroid(&self.centroids, feature))
    }

    /// Type of a (possibly unseen) body.
    pub fn assign_body(&self, body: &BodyRecord) -> usize {
        nearest_centroid(&self.centroids, &self.standardized_feature(body))
    }

    pub fn type_of(&self, body_index: usize) -> usize {
        self.assignment[body_index]
    }

    /// Body indices of each type, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &t) in self.assignment.iter().enumerate() {
            out[t].push(i);
        }
        out
    }

    /// Checks that this clustering was built for `catalog`'s bodies.
    pub fn check_covers(&self, catalog: &Catalog) -> Result<(), TypingError> {
        let same = self.body_ids.len() == catalog.bodies().len()
            && self.body_ids.iter().zip(catalog.bodies()).all(|(a, b)| *a == b.id);
        if !same {
            return Err(TypingError::Mismatch("clustering does not cover the catalog's bodies".into()));
        }
        Ok(())
    }
}

/// Clusters all catalog bodies into `config.k` types.
pub fn cluster_bodies(catalog: &Catalog, config: &ClusterConfig) -> Result<Clustering, TypingError> {
    let raw: Vec<Vec<f64>> = catalog.bodies().iter().map(BodyRecord::features).collect();
    let stats = FeatureStats::fit(&raw).map_err(|e| TypingError::Mismatch(e.to_string()))?;
    let features: Vec<Vec<f64>> = raw.iter().map(|f| stats.apply(f)).collect();
    let fit = kmeans_fit(&features, config.k, config.seed, config.max_iter, config.restarts)?;
    Ok(Clustering {
        k: config.k,
        centroids: fit.centroids,
        assignment: fit.assignment,
        body_ids: catalog.bodies().iter().map(|b| b.id.clone()).collect(),
        feature_stats: stats,
    })
}
