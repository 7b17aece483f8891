//! The four comparable methods behind one trainer/scorer interface.

use std::fmt;
use std::str::FromStr;

use crate::catalog::{BodyRecord, Catalog};
use crate::cf::{cf_train, CFModel, CFTrainConfig, CfVariant};
use crate::embed::{train_vibe, ViBEModel, ViBETrainConfig};
use crate::eval::{PairScorer, Trainer};
use crate::numkit::euclidean_distance;
use crate::typing::{LabeledPair, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Vibe,
    AgnosticEmbed,
    CfAgnostic,
    CfAware,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Vibe, Method::AgnosticEmbed, Method::CfAgnostic, Method::CfAware];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Vibe => "vibe",
            Method::AgnosticEmbed => "agnostic-embed",
            Method::CfAgnostic => "cf-agnostic",
            Method::CfAware => "cf-aware",
        }
    }

    pub fn is_embedding(self) -> bool {
        matches!(self, Method::Vibe | Method::AgnosticEmbed)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected one of vibe, agnostic-embed, cf-agnostic, cf-aware)"))
    }
}

/// A trained model of any method.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Embedding(ViBEModel),
    Cf(CFModel),
}

impl TrainedModel {
    /// Compatibility score of one catalog pair, higher is better: negative
    /// embedding distance, or the CF logit.
    pub fn score(&self, catalog: &Catalog, body: usize, garment: usize) -> Result<f64, String> {
        self.score_body(catalog.body(body), Some(body), catalog, garment)
    }

    /// Like [`TrainedModel::score`] for a body that need not be in the
    /// catalog; `body_index` names its catalog row when it has one (only
    /// the CF latents use it).
    pub fn score_body(
        &self,
        body: &BodyRecord,
        body_index: Option<usize>,
        catalog: &Catalog,
        garment: usize,
    ) -> Result<f64, String> {
        match self {
            TrainedModel::Embedding(m) => m
                .score_affinity(body, catalog.garment(garment))
                .map_err(|e| e.to_string()),
            TrainedModel::Cf(m) => {
                let side = m
                    .side_vectors(body, catalog.garment(garment))
                    .map_err(|e| e.to_string())?;
                Ok(m.logit(body_index, Some(garment), side.as_ref()))
            }
        }
    }
}

impl PairScorer for TrainedModel {
    fn score_pairs(&self, catalog: &Catalog, pairs: &[LabeledPair]) -> Result<Vec<f64>, String> {
        match self {
            TrainedModel::Embedding(m) => {
                // Embed every catalog entity once, then read distances.
                let inputs = m.encode(catalog).map_err(|e| e.to_string())?;
                let zb = m.embed_encoded_bodies(&inputs).map_err(|e| e.to_string())?;
                let zg = m.embed_encoded_garments(&inputs).map_err(|e| e.to_string())?;
                Ok(pairs
                    .iter()
                    .map(|p| -euclidean_distance(zb.row(p.body), zg.row(p.garment)))
                    .collect())
            }
            TrainedModel::Cf(_) => pairs.iter().map(|p| self.score(catalog, p.body, p.garment)).collect(),
        }
    }
}

/// Training settings for every method; [`MethodTrainer::train`] picks the
/// ones of `method` and overrides their seed per run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrainer {
    pub method: Method,
    pub vibe: ViBETrainConfig,
    pub agnostic_embed: ViBETrainConfig,
    pub cf_agnostic: CFTrainConfig,
    pub cf_aware: CFTrainConfig,
}

impl MethodTrainer {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            vibe: ViBETrainConfig::default(),
            agnostic_embed: ViBETrainConfig::agnostic(),
            cf_agnostic: CFTrainConfig::for_variant(CfVariant::Agnostic),
            cf_aware: CFTrainConfig::for_variant(CfVariant::Aware),
        }
    }

    /// Trains once; also returns the per-epoch loss trajectory.
    pub fn fit(&self, catalog: &Catalog, split: &Split, seed: u64) -> Result<(TrainedModel, Vec<f64>), String> {
        let embed = |base: &ViBETrainConfig| {
            let config = ViBETrainConfig { seed, ..base.clone() };
            train_vibe(&config, catalog, split)
                .map(|t| (TrainedModel::Embedding(t.model), t.loss_history))
                .map_err(|e| e.to_string())
        };
        let cf = |base: &CFTrainConfig, variant| {
            let config = CFTrainConfig { seed, ..base.clone() };
            cf_train(&config, catalog, split, variant)
                .map(|t| (TrainedModel::Cf(t.model), t.loss_history))
                .map_err(|e| e.to_string())
        };
        match self.method {
            Method::Vibe => embed(&self.vibe),
            Method::AgnosticEmbed => embed(&self.agnostic_embed),
            Method::CfAgnostic => cf(&self.cf_agnostic, CfVariant::Agnostic),
            Method::CfAware => cf(&self.cf_aware, CfVariant::Aware),
        }
    }
}

impl Trainer for MethodTrainer {
    type Scorer = TrainedModel;
    fn train(&self, catalog: &Catalog, split: &Split, seed: u64) -> Result<TrainedModel, String> {
        self.fit(catalog, split, seed).map(|(m, _)| m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_parse_back() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("vibes".parse::<Method>().is_err());
    }
}
