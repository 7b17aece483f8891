//! Collaborative-filtering baselines: biased matrix factorization trained
//! with binary cross entropy, optionally augmented with side vectors
//! projected from body and garment features.

mod train;

pub use train::{cf_train, pair_loss_and_gradient, CFTrainConfig, TrainedCF};

use thiserror::Error;

use crate::catalog::{BodyRecord, Catalog, FeatureStats, GarmentRecord};
use crate::numkit::{dot, DenseMatrix};

#[derive(Debug, Error)]
pub enum CfError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no training pairs: {0}")]
    NoTrainingData(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("{what} has {found} values, the model expects {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfVariant {
    /// Latent factors and biases only.
    Agnostic,
    /// Latents augmented with linear projections of the entity features.
    Aware,
}

impl CfVariant {
    pub fn tag(self) -> &'static str {
        match self {
            CfVariant::Agnostic => "cf-agnostic",
            CfVariant::Aware => "cf-aware",
        }
    }
}

/// Linear maps from standardized features to side vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SideProjections {
    /// side_dim × body feature width (14).
    pub body: DenseMatrix,
    /// side_dim × garment feature width (attributes + visual).
    pub garment: DenseMatrix,
    pub body_stats: FeatureStats,
    pub garment_stats: FeatureStats,
}

/// Factorization over catalog indices: one latent row and bias per body
/// (user) and garment (item). Entities absent from training keep zero
/// latents and zero biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CFModel {
    pub global_bias: f64,
    pub user_latent: DenseMatrix,
    pub user_bias: Vec<f64>,
    pub item_latent: DenseMatrix,
    pub item_bias: Vec<f64>,
    pub side: Option<SideProjections>,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Raw garment feature for the side projection: attribute bits then visual.
pub fn garment_side_feature(g: &GarmentRecord) -> Vec<f64> {
    let mut f = g.attribute_values();
    f.extend_from_slice(&g.visual);
    f
}

/// Side-vector inputs for one (body, garment) pair, already projected.
#[derive(Debug, Clone, PartialEq)]
pub struct SideVectors {
    pub body: Vec<f64>,
    pub garment: Vec<f64>,
}

impl CFModel {
    pub fn variant(&self) -> CfVariant {
        if self.side.is_some() {
            CfVariant::Aware
        } else {
            CfVariant::Agnostic
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.user_latent.cols()
    }

    pub fn side_dim(&self) -> usize {
        self.side.as_ref().map_or(0, |s| s.body.rows())
    }

    pub fn num_users(&self) -> usize {
        self.user_latent.rows()
    }

    pub fn num_items(&self) -> usize {
        self.item_latent.rows()
    }

    /// Standardized body feature as consumed by the side projection.
    pub fn body_input(&self, body: &BodyRecord) -> Option<Vec<f64>> {
        self.side.as_ref().map(|s| s.body_stats.apply(&body.features()))
    }

    pub fn garment_input(&self, garment: &GarmentRecord) -> Option<Vec<f64>> {
        self.side
            .as_ref()
            .map(|s| s.garment_stats.apply(&garment_side_feature(garment)))
    }

    fn project(m: &DenseMatrix, x: &[f64]) -> Vec<f64> {
        m.iter_rows().map(|r| dot(r, x)).collect()
    }

    /// Side vectors of a pair; `None` for the agnostic variant.
    pub fn side_vectors(&self, body: &BodyRecord, garment: &GarmentRecord) -> Result<Option<SideVectors>, CfError> {
        let Some(s) = &self.side else { return Ok(None) };
        let gf = garment_side_feature(garment);
        if gf.len() != s.garment.cols() {
            return Err(CfError::Dimension {
                what: "garment feature",
                expected: s.garment.cols(),
                found: gf.len(),
            });
        }
        Ok(Some(SideVectors {
            body: Self::project(&s.body, &s.body_stats.apply(&body.features())),
            garment: Self::project(&s.garment, &s.garment_stats.apply(&gf)),
        }))
    }

    /// Interaction logit. `user`/`item` are catalog indices of entities the
    /// model may know; `None` (or an index outside the model) is treated as
    /// unseen, contributing zero latent and zero bias.
    pub fn logit(&self, user: Option<usize>, item: Option<usize>, side: Option<&SideVectors>) -> f64 {
        self.logit_with_side(user, item, side.map_or(0.0, |s| dot(&s.body, &s.garment)))
    }

    /// [`CFModel::logit`] with the side-vector inner product precomputed.
    pub(crate) fn logit_with_side(&self, user: Option<usize>, item: Option<usize>, side: f64) -> f64 {
        let user = user.filter(|&u| u < self.num_users());
        let item = item.filter(|&i| i < self.num_items());
        let latent = match (user, item) {
            (Some(u), Some(i)) => dot(self.user_latent.row(u), self.item_latent.row(i)),
            _ => 0.0,
        };
        latent + side + user.map_or(0.0, |u| self.user_bias[u]) + item.map_or(0.0, |i| self.item_bias[i]) + self.global_bias
    }

    /// Logistic of [`CFModel::logit`], kept strictly inside (0, 1) even
    /// where the logistic rounds to an endpoint.
    pub fn predict_probability(&self, user: Option<usize>, item: Option<usize>, side: Option<&SideVectors>) -> f64 {
        logistic(self.logit(user, item, side)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    /// Probability for a catalog pair; the records supply side features.
    pub fn predict(&self, catalog: &Catalog, body: usize, garment: usize) -> Result<f64, CfError> {
        let side = self.side_vectors(catalog.body(body), catalog.garment(garment))?;
        Ok(self.predict_probability(Some(body), Some(garment), side.as_ref()))
    }

    /// Logits for every (body, garment) combination, bodies as rows.
    pub fn score_matrix(&self, catalog: &Catalog, bodies: &[usize], garments: &[usize]) -> Result<DenseMatrix, CfError> {
        let mut out = DenseMatrix::zeros(bodies.len(), garments.len());
        let side: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = match &self.side {
            None => None,
            Some(s) => {
                let vb = bodies
                    .iter()
                    .map(|&b| Self::project(&s.body, &s.body_stats.apply(&catalog.body(b).features())))
                    .collect();
                let mut vg = Vec::with_capacity(garments.len());
                for &g in garments {
                    let f = garment_side_feature(catalog.garment(g));
                    if f.len() != s.garment.cols() {
                        return Err(CfError::Dimension {
                            what: "garment feature",
                            expected: s.garment.cols(),
                            found: f.len(),
                        });
                    }
                    vg.push(Self::project(&s.garment, &s.garment_stats.apply(&f)));
                }
                Some((vb, vg))
            }
        };
        for (r, &b) in bodies.iter().enumerate() {
            for (c, &g) in garments.iter().enumerate() {
                let s = side.as_ref().map_or(0.0, |(vb, vg)| dot(&vb[r], &vg[c]));
                out.set(r, c, self.logit_with_side(Some(b), Some(g), s));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bias_only(bg: f64, bu: f64, bi: f64) -> CFModel {
        CFModel {
            global_bias: bg,
            user_latent: DenseMatrix::zeros(1, 3),
            user_bias: vec![bu],
            item_latent: DenseMatrix::zeros(1, 3),
            item_bias: vec![bi],
            side: None,
        }
    }

    #[test]
    fn bias_only_prediction() {
        let m = bias_only(0.3, 0.1, 0.2);
        let p = m.predict_probability(Some(0), Some(0), None);
        assert!((p - 1.0 / (1.0 + (-0.6f64).exp())).abs() < 1e-15);
        assert!((p - 0.6457).abs() < 5e-5);
    }

    #[test]
    fn cold_start_uses_global_bias_only() {
        let m = bias_only(0.3, 5.0, -7.0);
        let p = m.predict_probability(None, None, None);
        assert_eq!(p, logistic(0.3));
        // indices outside the model are unseen as well
        assert_eq!(m.predict_probability(Some(4), Some(9), None), logistic(0.3));
    }

    #[test]
    fn inner_product_of_equal_vectors() {
        let mut m = bias_only(0.0, 0.0, 0.0);
        let x = [0.6, 0.0, 0.8];
        m.user_latent.row_mut(0).copy_from_slice(&x);
        m.item_latent.row_mut(0).copy_from_slice(&x);
        assert!((m.logit(Some(0), Some(0), None) - 1.0).abs() < 1e-15);
        let side = SideVectors {
            body: vec![0.5, 0.5],
            garment: vec![0.5, 0.5],
        };
        assert!((m.logit(Some(0), Some(0), Some(&side)) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
        assert!((logistic(3.0) + logistic(-3.0) - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn probability_strictly_inside_unit_interval(bg in -1e3f64..1e3, bu in -5.0f64..5.0, bi in -5.0f64..5.0) {
            let p = bias_only(bg, bu, bi).predict_probability(Some(0), Some(0), None);
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}
