//! Batched evaluation of the combined loss and its parameter gradient.
//!
//! Every distinct body and garment of a batch goes through its tower once;
//! per-triplet gradients are accumulated onto those shared rows before a
//! single reverse pass.

use super::{
    margin_loss_with_grad, EmbedError, EncodedInputs, HeadGrad, Margins, TripletBatch, TripletKind, ViBEModel,
};
use crate::numkit::{DenseMatrix, Mlp, MlpGrad};

/// Per-kind mean losses and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub body_cloth: f64,
    pub body_body: f64,
}

/// Assigns dense row numbers to the distinct catalog indices in a batch.
struct RowMap {
    slot: Vec<usize>,
    order: Vec<usize>,
}

impl RowMap {
    fn new(capacity: usize) -> Self {
        Self {
            slot: vec![usize::MAX; capacity],
            order: Vec::new(),
        }
    }

    fn insert(&mut self, index: usize) {
        if self.slot[index] == usize::MAX {
            self.slot[index] = self.order.len();
            self.order.push(index);
        }
    }

    fn row(&self, index: usize) -> usize {
        self.slot[index]
    }
}

fn add_row(m: &mut DenseMatrix, r: usize, g: &[f64], scale: f64) {
    for (x, v) in m.row_mut(r).iter_mut().zip(g) {
        *x += scale * v;
    }
}

fn evaluate(
    model: &ViBEModel,
    inputs: &EncodedInputs,
    batch: &TripletBatch,
    margins: Margins,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Vec<f64>>), EmbedError> {
    let mut bodies = RowMap::new(inputs.smpl.rows());
    let mut garments = RowMap::new(inputs.attributes.rows());
    for t in batch.iter() {
        bodies.insert(t.anchor);
        match t.kind {
            TripletKind::BodyCloth => {
                garments.insert(t.positive);
                garments.insert(t.negative);
            }
            TripletKind::BodyBody => {
                bodies.insert(t.positive);
                bodies.insert(t.negative);
            }
        }
    }
    let body_tape = (!bodies.order.is_empty())
        .then(|| model.forward_bodies(inputs, &bodies.order))
        .transpose()?;
    let garment_tape = (!garments.order.is_empty())
        .then(|| model.forward_garments(inputs, &garments.order))
        .transpose()?;

    let d = super::EMBEDDING_DIM;
    let mut d_body = DenseMatrix::zeros(bodies.order.len(), d);
    let mut d_garment = DenseMatrix::zeros(garments.order.len(), d);
    let mut breakdown = LossBreakdown {
        total: 0.0,
        body_cloth: 0.0,
        body_body: 0.0,
    };

    if let (Some(bt), Some(gt)) = (&body_tape, &garment_tape) {
        let scale = 1.0 / batch.body_cloth.len() as f64;
        for t in &batch.body_cloth {
            let (ra, rp, rn) = (bodies.row(t.anchor), garments.row(t.positive), garments.row(t.negative));
            let g = margin_loss_with_grad(bt.unit().row(ra), gt.unit().row(rp), gt.unit().row(rn), margins);
            breakdown.body_cloth += g.loss * scale;
            if want_grad {
                add_row(&mut d_body, ra, &g.anchor, scale);
                add_row(&mut d_garment, rp, &g.positive, scale);
                add_row(&mut d_garment, rn, &g.negative, scale);
            }
        }
    }
    if let Some(bt) = &body_tape {
        if !batch.body_body.is_empty() {
            let scale = 1.0 / batch.body_body.len() as f64;
            for t in &batch.body_body {
                let (ra, rp, rn) = (bodies.row(t.anchor), bodies.row(t.positive), bodies.row(t.negative));
                let g = margin_loss_with_grad(bt.unit().row(ra), bt.unit().row(rp), bt.unit().row(rn), margins);
                breakdown.body_body += g.loss * scale;
                if want_grad {
                    add_row(&mut d_body, ra, &g.anchor, scale);
                    add_row(&mut d_body, rp, &g.positive, scale);
                    add_row(&mut d_body, rn, &g.negative, scale);
                }
            }
        }
    }
    breakdown.total = breakdown.body_cloth + breakdown.body_body;
    if !want_grad {
        return Ok((breakdown, None));
    }

    let zero = |net: (&Mlp, &Mlp, &Mlp)| HeadGrad {
        left: MlpGrad::zeros_like(net.0),
        right: MlpGrad::zeros_like(net.1),
        head: MlpGrad::zeros_like(net.2),
    };
    let body_grad = match &body_tape {
        Some(t) => model.backward_bodies(t, &d_body)?,
        None => zero((&model.h_smpl, &model.h_meas, &model.f_body)),
    };
    let garment_grad = match &garment_tape {
        Some(t) => model.backward_garments(t, &d_garment)?,
        None => zero((&model.h_attr, &model.h_cnn, &model.f_cloth)),
    };
    let mut flat = Vec::with_capacity(model.param_count());
    for g in [
        &garment_grad.left,
        &garment_grad.right,
        &body_grad.left,
        &body_grad.right,
        &garment_grad.head,
        &body_grad.head,
    ] {
        g.write_flat(&mut flat);
    }
    Ok((breakdown, Some(flat)))
}

/// Mean body–cloth loss plus mean body–body loss over `batch`; an empty
/// kind contributes zero.
pub fn total_loss(
    model: &ViBEModel,
    inputs: &EncodedInputs,
    batch: &TripletBatch,
    margins: Margins,
) -> Result<LossBreakdown, EmbedError> {
    Ok(evaluate(model, inputs, batch, margins, false)?.0)
}

/// [`total_loss`] together with its gradient, laid out like
/// [`ViBEModel::params`].
pub fn total_loss_and_gradient(
    model: &ViBEModel,
    inputs: &EncodedInputs,
    batch: &TripletBatch,
    margins: Margins,
) -> Result<(LossBreakdown, Vec<f64>), EmbedError> {
    let (loss, grad) = evaluate(model, inputs, batch, margins, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_synthetic, StandardizationStats, SyntheticSpec, FeatureStats};
    use crate::embed::{margin_loss, Triplet};
    use crate::numkit::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture(seed: u64) -> (ViBEModel, EncodedInputs) {
        let catalog = generate_synthetic(&SyntheticSpec {
            num_garments: 12,
            attribute_dim: 24,
            visual_dim: 5,
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let fit = |rows: Vec<Vec<f64>>| FeatureStats::fit(&rows).unwrap();
        let stats = StandardizationStats {
            smpl: fit(catalog.bodies().iter().map(|b| b.smpl.to_vec()).collect()),
            vitals: fit(catalog.bodies().iter().map(|b| b.vitals.to_vec()).collect()),
            visual: fit(catalog.garments().iter().map(|g| g.visual.clone()).collect()),
        };
        let model = ViBEModel::random(24, 5, stats, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let inputs = model.encode(&catalog).unwrap();
        (model, inputs)
    }

    fn tr(kind: TripletKind, anchor: usize, positive: usize, negative: usize) -> Triplet {
        Triplet {
            kind,
            anchor,
            positive,
            negative,
        }
    }

    #[test]
    fn singleton_batch_is_sum_of_individual_losses() {
        let (model, inputs) = fixture(1);
        let batch = TripletBatch {
            body_cloth: vec![tr(TripletKind::BodyCloth, 0, 3, 7)],
            body_body: vec![tr(TripletKind::BodyBody, 5, 6, 40)],
        };
        let got = total_loss(&model, &inputs, &batch, Margins::default()).unwrap();
        let zb = model.embed_encoded_bodies(&inputs).unwrap();
        let zg = model.embed_encoded_garments(&inputs).unwrap();
        let bc = margin_loss(zb.row(0), zg.row(3), zg.row(7), Margins::default());
        let bb = margin_loss(zb.row(5), zb.row(6), zb.row(40), Margins::default());
        assert!((got.body_cloth - bc).abs() < 1e-12);
        assert!((got.body_body - bb).abs() < 1e-12);
        assert!((got.total - (bc + bb)).abs() < 1e-12);
    }

    #[test]
    fn satisfied_batch_has_zero_loss() {
        let (model, inputs) = fixture(2);
        // Anchor equals positive, negative lies beyond the margin when the
        // negative margin is tiny.
        let zb = model.embed_encoded_bodies(&inputs).unwrap();
        let far = (1..zb.rows())
            .find(|&j| crate::numkit::euclidean_distance(zb.row(0), zb.row(j)) > 1e-3)
            .unwrap();
        let batch = TripletBatch {
            body_cloth: vec![],
            body_body: vec![tr(TripletKind::BodyBody, 0, 0, far)],
        };
        let margins = Margins::new(0.0, 1e-3).unwrap();
        assert_eq!(total_loss(&model, &inputs, &batch, margins).unwrap().total, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (model, inputs) = fixture(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::Rng;
            let batch = TripletBatch {
                body_cloth: (0..4)
                    .map(|_| tr(TripletKind::BodyCloth, rng.random_range(0..60), rng.random_range(0..12), rng.random_range(0..12)))
                    .collect(),
                body_body: (0..4)
                    .map(|_| tr(TripletKind::BodyBody, rng.random_range(0..60), rng.random_range(0..60), rng.random_range(0..60)))
                    .collect(),
            };
            // Wide margins keep every hinge active.
            let margins = Margins::new(0.0, 2.0).unwrap();
            let params = model.params();
            let f = |p: &[f64]| {
                let mut m = model.clone();
                m.set_params(p).unwrap();
                let (l, g) = total_loss_and_gradient(&m, &inputs, &batch, margins).unwrap();
                (l.total, g)
            };
            let report = grad_check(f, &params, 1e-5);
            assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
            assert!(report.excluded.len() * 20 < report.checked + report.excluded.len(), "{} excluded", report.excluded.len());
        }
    }
}
