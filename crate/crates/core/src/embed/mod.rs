//! The body-aware embedding: projection towers for each input kind, two
//! embedding heads onto the unit sphere, the dual margin loss and training.

mod loss;
mod objective;
mod sampling;
mod train;

pub use loss::{distance, margin_loss, margin_loss_with_grad, Margins, TripletGrad};
pub use objective::{total_loss, total_loss_and_gradient, LossBreakdown};
pub use sampling::{sample_triplets, Triplet, TripletBatch, TripletKind, TripletSampler};
pub use train::{train_vibe, TrainedViBE, ViBETrainConfig};

use rand::Rng;
use thiserror::Error;

use crate::catalog::{BodyRecord, Catalog, GarmentRecord, StandardizationStats, SMPL_DIM, VITALS_DIM};
use crate::numkit::{euclidean_distance, l2_normalize, l2_normalize_backward, DenseMatrix, Mlp, MlpGrad, MlpTape, NumError};

/// Width of the shared embedding space.
pub const EMBEDDING_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error("{what} has {found} values, the model expects {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("cannot sample triplets: {0}")]
    Sampling(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("numeric failure at epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        source: NumError,
    },
}

/// Projection towers, embedding heads and the input standardization used
/// at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct ViBEModel {
    pub h_attr: Mlp,
    pub h_cnn: Mlp,
    pub h_smpl: Mlp,
    pub h_meas: Mlp,
    pub f_cloth: Mlp,
    pub f_body: Mlp,
    pub stats: StandardizationStats,
}

/// Standardized network inputs for every body and garment of a catalog,
/// one row per entity.
#[derive(Debug, Clone)]
pub struct EncodedInputs {
    pub smpl: DenseMatrix,
    pub vitals: DenseMatrix,
    pub attributes: DenseMatrix,
    pub visual: DenseMatrix,
}

/// Activations of one two-tower head, kept for the reverse pass.
pub(crate) struct HeadTape {
    left: MlpTape,
    right: MlpTape,
    head: MlpTape,
    left_width: usize,
    unit: DenseMatrix,
    norms: Vec<f64>,
}

pub(crate) struct HeadGrad {
    pub left: MlpGrad,
    pub right: MlpGrad,
    pub head: MlpGrad,
}

fn concat_columns(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), a.cols() + b.cols());
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..a.cols()].copy_from_slice(a.row(r));
        row[a.cols()..].copy_from_slice(b.row(r));
    }
    out
}

fn split_columns(m: &DenseMatrix, left: usize) -> (DenseMatrix, DenseMatrix) {
    let mut a = DenseMatrix::zeros(m.rows(), left);
    let mut b = DenseMatrix::zeros(m.rows(), m.cols() - left);
    for r in 0..m.rows() {
        a.row_mut(r).copy_from_slice(&m.row(r)[..left]);
        b.row_mut(r).copy_from_slice(&m.row(r)[left..]);
    }
    (a, b)
}

/// Rows `indices` of `m`, in that order.
pub(crate) fn gather_rows(m: &DenseMatrix, indices: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(indices.len(), m.cols());
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

fn normalize_rows(raw: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>), NumError> {
    let mut unit = DenseMatrix::zeros(raw.rows(), raw.cols());
    let mut norms = Vec::with_capacity(raw.rows());
    for r in 0..raw.rows() {
        let u = l2_normalize(raw.row(r))?;
        norms.push(crate::numkit::norm(raw.row(r)));
        unit.row_mut(r).copy_from_slice(&u);
    }
    Ok((unit, norms))
}

fn head_forward(left: &Mlp, right: &Mlp, head: &Mlp, xl: &DenseMatrix, xr: &DenseMatrix) -> Result<HeadTape, NumError> {
    let (ol, tl) = left.apply_batch(xl)?;
    let (or, tr) = right.apply_batch(xr)?;
    let joint = concat_columns(&ol, &or);
    let (raw, th) = head.apply_batch(&joint)?;
    let (unit, norms) = normalize_rows(&raw)?;
    Ok(HeadTape {
        left: tl,
        right: tr,
        head: th,
        left_width: ol.cols(),
        unit,
        norms,
    })
}

fn head_infer(left: &Mlp, right: &Mlp, head: &Mlp, xl: &DenseMatrix, xr: &DenseMatrix) -> Result<DenseMatrix, NumError> {
    let joint = concat_columns(&left.infer_batch(xl)?, &right.infer_batch(xr)?);
    Ok(normalize_rows(&head.infer_batch(&joint)?)?.0)
}

fn head_backward(left: &Mlp, right: &Mlp, head: &Mlp, tape: &HeadTape, d_unit: &DenseMatrix) -> Result<HeadGrad, NumError> {
    let mut d_raw = DenseMatrix::zeros(d_unit.rows(), d_unit.cols());
    for r in 0..d_unit.rows() {
        let g = l2_normalize_backward(tape.unit.row(r), tape.norms[r], d_unit.row(r));
        d_raw.row_mut(r).copy_from_slice(&g);
    }
    let (g_head, d_joint) = head.backprop_batch(&tape.head, &d_raw)?;
    let (dl, dr) = split_columns(&d_joint, tape.left_width);
    let (g_left, _) = left.backprop_batch(&tape.left, &dl)?;
    let (g_right, _) = right.backprop_batch(&tape.right, &dr)?;
    Ok(HeadGrad {
        left: g_left,
        right: g_right,
        head: g_head,
    })
}

impl HeadTape {
    pub(crate) fn unit(&self) -> &DenseMatrix {
        &self.unit
    }
}

impl ViBEModel {
    /// Freshly initialized model for `attribute_dim` attributes and
    /// `visual_dim` visual features.
    pub fn random<R: Rng + ?Sized>(
        attribute_dim: usize,
        visual_dim: usize,
        stats: StandardizationStats,
        rng: &mut R,
    ) -> Result<Self, EmbedError> {
        if stats.smpl.dim() != SMPL_DIM || stats.vitals.dim() != VITALS_DIM || stats.visual.dim() != visual_dim {
            return Err(EmbedError::Dimension {
                what: "standardization statistics",
                expected: SMPL_DIM + VITALS_DIM + visual_dim,
                found: stats.smpl.dim() + stats.vitals.dim() + stats.visual.dim(),
            });
        }
        let a = attribute_dim;
        let v = visual_dim;
        Ok(Self {
            h_attr: Mlp::random(&[a, a, 32, 8], rng)?,
            h_cnn: Mlp::random(&[v, v, 256, 8], rng)?,
            h_smpl: Mlp::random(&[SMPL_DIM, SMPL_DIM, 8, 4], rng)?,
            h_meas: Mlp::random(&[VITALS_DIM, VITALS_DIM, 4, 4], rng)?,
            f_cloth: Mlp::random(&[16, 8, EMBEDDING_DIM], rng)?,
            f_body: Mlp::random(&[8, 16, EMBEDDING_DIM], rng)?,
            stats,
        })
    }

    pub fn attribute_dim(&self) -> usize {
        self.h_attr.in_dim()
    }

    pub fn visual_dim(&self) -> usize {
        self.h_cnn.in_dim()
    }

    fn networks(&self) -> [&Mlp; 6] {
        [&self.h_attr, &self.h_cnn, &self.h_smpl, &self.h_meas, &self.f_cloth, &self.f_body]
    }

    fn networks_mut(&mut self) -> [&mut Mlp; 6] {
        [
            &mut self.h_attr,
            &mut self.h_cnn,
            &mut self.h_smpl,
            &mut self.h_meas,
            &mut self.f_cloth,
            &mut self.f_body,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.networks().iter().map(|n| n.param_count()).sum()
    }

    /// All parameters, network by network in the order
    /// `h_attr, h_cnn, h_smpl, h_meas, f_cloth, f_body`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for n in self.networks() {
            n.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), EmbedError> {
        if flat.len() != self.param_count() {
            return Err(EmbedError::Dimension {
                what: "parameter vector",
                expected: self.param_count(),
                found: flat.len(),
            });
        }
        let mut offset = 0;
        for n in self.networks_mut() {
            offset += n.read_params(&flat[offset..])?;
        }
        Ok(())
    }

    fn check_garment(&self, g: &GarmentRecord) -> Result<(), EmbedError> {
        if g.attributes.len() != self.attribute_dim() {
            return Err(EmbedError::Dimension {
                what: "garment attributes",
                expected: self.attribute_dim(),
                found: g.attributes.len(),
            });
        }
        if g.visual.len() != self.visual_dim() {
            return Err(EmbedError::Dimension {
                what: "garment visual features",
                expected: self.visual_dim(),
                found: g.visual.len(),
            });
        }
        Ok(())
    }

    /// Standardized inputs for all bodies and garments of `catalog`.
    pub fn encode(&self, catalog: &Catalog) -> Result<EncodedInputs, EmbedError> {
        self.encode_records(catalog.bodies(), catalog.garments())
    }

    pub fn encode_records(&self, bodies: &[BodyRecord], garments: &[GarmentRecord]) -> Result<EncodedInputs, EmbedError> {
        for g in garments {
            self.check_garment(g)?;
        }
        let rows = |n: usize, w: usize, values: Vec<f64>| DenseMatrix::from_vec(n, w, values);
        let nb = bodies.len();
        let ng = garments.len();
        let smpl = bodies.iter().flat_map(|b| self.stats.smpl.apply(&b.smpl)).collect();
        let vitals = bodies.iter().flat_map(|b| self.stats.vitals.apply(&b.vitals)).collect();
        let attributes = garments.iter().flat_map(GarmentRecord::attribute_values).collect();
        let visual = garments.iter().flat_map(|g| self.stats.visual.apply(&g.visual)).collect();
        Ok(EncodedInputs {
            smpl: rows(nb, SMPL_DIM, smpl)?,
            vitals: rows(nb, VITALS_DIM, vitals)?,
            attributes: rows(ng, self.attribute_dim(), attributes)?,
            visual: rows(ng, self.visual_dim(), visual)?,
        })
    }

    pub(crate) fn forward_bodies(&self, inputs: &EncodedInputs, rows: &[usize]) -> Result<HeadTape, NumError> {
        head_forward(
            &self.h_smpl,
            &self.h_meas,
            &self.f_body,
            &gather_rows(&inputs.smpl, rows),
            &gather_rows(&inputs.vitals, rows),
        )
    }

    pub(crate) fn forward_garments(&self, inputs: &EncodedInputs, rows: &[usize]) -> Result<HeadTape, NumError> {
        head_forward(
            &self.h_attr,
            &self.h_cnn,
            &self.f_cloth,
            &gather_rows(&inputs.attributes, rows),
            &gather_rows(&inputs.visual, rows),
        )
    }

    pub(crate) fn backward_bodies(&self, tape: &HeadTape, d_unit: &DenseMatrix) -> Result<HeadGrad, NumError> {
        head_backward(&self.h_smpl, &self.h_meas, &self.f_body, tape, d_unit)
    }

    pub(crate) fn backward_garments(&self, tape: &HeadTape, d_unit: &DenseMatrix) -> Result<HeadGrad, NumError> {
        head_backward(&self.h_attr, &self.h_cnn, &self.f_cloth, tape, d_unit)
    }

    /// Unit embeddings of every encoded body, one row each.
    pub fn embed_encoded_bodies(&self, inputs: &EncodedInputs) -> Result<DenseMatrix, EmbedError> {
        Ok(head_infer(&self.h_smpl, &self.h_meas, &self.f_body, &inputs.smpl, &inputs.vitals)?)
    }

    /// Unit embeddings of every encoded garment, one row each.
    pub fn embed_encoded_garments(&self, inputs: &EncodedInputs) -> Result<DenseMatrix, EmbedError> {
        Ok(head_infer(&self.h_attr, &self.h_cnn, &self.f_cloth, &inputs.attributes, &inputs.visual)?)
    }

    pub fn embed_garment(&self, garment: &GarmentRecord) -> Result<Vec<f64>, EmbedError> {
        let inputs = self.encode_records(&[], std::slice::from_ref(garment))?;
        Ok(self.embed_encoded_garments(&inputs)?.into_vec())
    }

    pub fn embed_body(&self, body: &BodyRecord) -> Result<Vec<f64>, EmbedError> {
        let inputs = self.encode_records(std::slice::from_ref(body), &[])?;
        Ok(self.embed_encoded_bodies(&inputs)?.into_vec())
    }

    /// Negative embedding distance: 0 is the best possible score, -2 the worst.
    pub fn score_affinity(&self, body: &BodyRecord, garment: &GarmentRecord) -> Result<f64, EmbedError> {
        Ok(-distance(&self.embed_body(body)?, &self.embed_garment(garment)?))
    }
}

/// Median over all unordered pairs of row-to-row Euclidean distances.
pub fn median_pairwise_distance(embeddings: &DenseMatrix) -> Option<f64> {
    let n = embeddings.rows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(euclidean_distance(embeddings.row(i), embeddings.row(j)));
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    Some(if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_synthetic, FeatureStats, GarmentCategory, SyntheticSpec};
    use crate::numkit::norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_stats(visual_dim: usize) -> StandardizationStats {
        let s = |d: usize| FeatureStats {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        };
        StandardizationStats {
            smpl: s(SMPL_DIM),
            vitals: s(VITALS_DIM),
            visual: s(visual_dim),
        }
    }

    fn model(seed: u64) -> ViBEModel {
        ViBEModel::random(6, 3, unit_stats(3), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn garment(bits: [bool; 6], visual: [f64; 3]) -> GarmentRecord {
        GarmentRecord::new("g", GarmentCategory::Top, bits.to_vec(), visual.to_vec()).unwrap()
    }

    fn body(x: f64) -> BodyRecord {
        BodyRecord::new("b", [x; SMPL_DIM], [160.0 + x, 90.0, 70.0, 95.0]).unwrap()
    }

    #[test]
    fn layer_widths() {
        let m = model(0);
        assert_eq!(m.h_attr.dims(), vec![6, 6, 32, 8]);
        assert_eq!(m.h_cnn.dims(), vec![3, 3, 256, 8]);
        assert_eq!(m.h_smpl.dims(), vec![10, 10, 8, 4]);
        assert_eq!(m.h_meas.dims(), vec![4, 4, 4, 4]);
        assert_eq!(m.f_cloth.dims(), vec![16, 8, 4]);
        assert_eq!(m.f_body.dims(), vec![8, 16, 4]);
    }

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let m = model(1);
        let g = garment([true, false, true, false, false, true], [0.3, -1.0, 2.0]);
        let e1 = m.embed_garment(&g).unwrap();
        assert!((norm(&e1) - 1.0).abs() < 1e-12);
        assert_eq!(e1, m.embed_garment(&g.clone()).unwrap());
        let b = body(0.4);
        let z = m.embed_body(&b).unwrap();
        assert!((norm(&z) - 1.0).abs() < 1e-12);
        assert_eq!(z, m.embed_body(&b).unwrap());
    }

    #[test]
    fn zero_parameters_are_a_degenerate_direction() {
        let mut m = model(2);
        m.set_params(&vec![0.0; m.param_count()]).unwrap();
        let g = garment([true; 6], [1.0; 3]);
        assert!(matches!(m.embed_garment(&g), Err(EmbedError::Numeric(NumError::DegenerateNorm { .. }))));
        assert!(m.embed_body(&body(0.0)).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = model(3);
        let g = GarmentRecord::new("g", GarmentCategory::Top, vec![true; 5], vec![0.0; 3]).unwrap();
        assert!(matches!(m.embed_garment(&g), Err(EmbedError::Dimension { .. })));
    }

    #[test]
    fn affinity_is_negative_distance() {
        let m = model(4);
        let g = garment([false, true, true, false, false, true], [0.0, 1.0, -1.0]);
        let b = body(-0.3);
        let s = m.score_affinity(&b, &g).unwrap();
        let d = euclidean_distance(&m.embed_body(&b).unwrap(), &m.embed_garment(&g).unwrap());
        assert_eq!(s, -d);
        assert!((-2.0..=0.0).contains(&s));
    }

    #[test]
    fn params_round_trip() {
        let mut m = model(5);
        let p = m.params();
        let other = model(6);
        let mut q = other.params();
        assert_ne!(p, q);
        m.set_params(&q).unwrap();
        assert_eq!(m.params(), q);
        q.push(0.0);
        assert!(m.set_params(&q).is_err());
    }

    #[test]
    fn batched_embedding_matches_single() {
        let catalog = generate_synthetic(&SyntheticSpec {
            num_garments: 20,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let stats = unit_stats(catalog.visual_dim());
        let m = ViBEModel::random(catalog.attribute_dim(), catalog.visual_dim(), stats, &mut ChaCha8Rng::seed_from_u64(7))
            .unwrap();
        let inputs = m.encode(&catalog).unwrap();
        let all = m.embed_encoded_garments(&inputs).unwrap();
        for (i, g) in catalog.garments().iter().enumerate() {
            let single = m.embed_garment(g).unwrap();
            for (a, b) in all.row(i).iter().zip(&single) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let bodies = m.embed_encoded_bodies(&inputs).unwrap();
        let single = m.embed_body(catalog.body(3)).unwrap();
        for (a, b) in bodies.row(3).iter().zip(&single) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn median_distance() {
        let e = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        // distances: 2, sqrt2, sqrt2
        assert!((median_pairwise_distance(&e).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(median_pairwise_distance(&DenseMatrix::zeros(1, 2)).is_none());
    }
}
