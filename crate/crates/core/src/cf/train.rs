use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{garment_side_feature, CFModel, CfError, CfVariant, SideProjections};
use crate::catalog::{Catalog, FeatureStats};
use crate::numkit::{dot, scheduled_rate, DenseMatrix};
use crate::typing::Split;

#[derive(Debug, Clone, PartialEq)]
pub struct CFTrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub latent_dim: usize,
    pub side_dim: usize,
    /// Sampled type-level negatives per training positive and epoch.
    pub negatives_per_positive: usize,
    /// Half-width of the uniform initialization of latents and side maps.
    pub init_scale: f64,
    pub seed: u64,
    /// Train on type-propagated positives (otherwise observed pairs only).
    pub propagated_labels: bool,
    /// Keep the side projections at exactly zero (diagnostic).
    pub zero_side: bool,
}

impl CFTrainConfig {
    /// Defaults for a variant. The aware model trains for longer; the
    /// agnostic one needs a larger step to fit its training pairs within
    /// its epoch budget (at 1e-4 its BCE barely moves).
    pub fn for_variant(variant: CfVariant) -> Self {
        Self {
            learning_rate: match variant {
                CfVariant::Agnostic => 0.01,
                CfVariant::Aware => 1e-4,
            },
            weight_decay: 1e-4,
            epochs: match variant {
                CfVariant::Agnostic => 60,
                CfVariant::Aware => 80,
            },
            latent_dim: 20,
            side_dim: 5,
            negatives_per_positive: 1,
            init_scale: 0.1,
            seed: 0,
            propagated_labels: true,
            zero_side: false,
        }
    }

    /// Learning-rate steps: ×0.1 twenty and ten epochs before the end.
    pub fn schedule(&self) -> Vec<(usize, f64)> {
        vec![(self.epochs - 20, 0.1), (self.epochs - 10, 0.1)]
    }

    pub fn validate(&self) -> Result<(), CfError> {
        let fail = |m: String| Err(CfError::Config(m));
        if self.epochs <= 20 {
            return fail(format!("epochs must exceed 20 for the schedule, got {}", self.epochs));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) || self.learning_rate * self.weight_decay >= 1.0 {
            return fail(format!("weight decay {} out of range", self.weight_decay));
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be positive".into());
        }
        if self.negatives_per_positive == 0 {
            return fail("at least one negative per positive is needed".into());
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return fail("init_scale must be a finite non-negative number".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCF {
    pub model: CFModel,
    /// Mean BCE of each epoch, accumulated before each pair's update.
    pub loss_history: Vec<f64>,
    /// Mean BCE over the first epoch's pairs before any update.
    pub initial_loss: f64,
    /// Mean BCE over the same pairs after training.
    pub final_loss: f64,
}

/// `-[p log σ(z) + (1-p) log(1-σ(z))]`, computed stably from the logit.
fn bce_from_logit(z: f64, positive: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if positive {
        softplus - z
    } else {
        softplus
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Standardized side inputs for every catalog entity.
struct SideInputs {
    bodies: Vec<Vec<f64>>,
    garments: Vec<Vec<f64>>,
}

impl SideInputs {
    fn new(catalog: &Catalog, side: &SideProjections) -> Self {
        Self {
            bodies: catalog.bodies().iter().map(|b| side.body_stats.apply(&b.features())).collect(),
            garments: catalog
                .garments()
                .iter()
                .map(|g| side.garment_stats.apply(&garment_side_feature(g)))
                .collect(),
        }
    }
}

fn project(m: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    m.iter_rows().map(|r| dot(r, x)).collect()
}

/// Logit of one pair and, for the aware variant, its two side vectors.
fn pair_logit(model: &CFModel, inputs: Option<&SideInputs>, u: usize, i: usize) -> (f64, Option<(Vec<f64>, Vec<f64>)>) {
    let side = model.side.as_ref().zip(inputs).map(|(s, inp)| {
        (project(&s.body, &inp.bodies[u]), project(&s.garment, &inp.garments[i]))
    });
    let side_dot = side.as_ref().map_or(0.0, |(vb, vg)| dot(vb, vg));
    (model.logit_with_side(Some(u), Some(i), side_dot), side)
}

/// Mean BCE over `pairs` of `(body, garment, positive)` and its gradient,
/// laid out like [`CFModel::params`].
pub fn pair_loss_and_gradient(
    model: &CFModel,
    catalog: &Catalog,
    pairs: &[(usize, usize, bool)],
) -> (f64, Vec<f64>) {
    let inputs = model.side.as_ref().map(|s| SideInputs::new(catalog, s));
    let layout = model.layout();
    let mut grad = vec![0.0; layout.total];
    let mut loss = 0.0;
    let scale = 1.0 / pairs.len() as f64;
    let d = model.latent_dim();
    for &(u, i, positive) in pairs {
        let (z, side) = pair_logit(model, inputs.as_ref(), u, i);
        loss += bce_from_logit(z, positive) * scale;
        let g = (sigmoid(z) - if positive { 1.0 } else { 0.0 }) * scale;
        grad[layout.global_bias] += g;
        for k in 0..d {
            grad[layout.user_latent + u * d + k] += g * model.item_latent.get(i, k);
            grad[layout.item_latent + i * d + k] += g * model.user_latent.get(u, k);
        }
        grad[layout.user_bias + u] += g;
        grad[layout.item_bias + i] += g;
        if let (Some((vb, vg)), Some(inp), Some(s)) = (side, inputs.as_ref(), model.side.as_ref()) {
            let (fb, fg) = (&inp.bodies[u], &inp.garments[i]);
            let (wb, wg) = (s.body.cols(), s.garment.cols());
            for r in 0..vb.len() {
                for c in 0..wb {
                    grad[layout.side_body + r * wb + c] += g * vg[r] * fb[c];
                }
                for c in 0..wg {
                    grad[layout.side_garment + r * wg + c] += g * vb[r] * fg[c];
                }
            }
        }
    }
    (loss, grad)
}

/// Offsets of each parameter block in the flat vector.
pub(crate) struct Layout {
    global_bias: usize,
    user_latent: usize,
    user_bias: usize,
    item_latent: usize,
    item_bias: usize,
    side_body: usize,
    side_garment: usize,
    total: usize,
}

impl CFModel {
    pub(crate) fn layout(&self) -> Layout {
        let mut at = 0;
        let mut next = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let global_bias = next(1);
        let user_latent = next(self.user_latent.as_slice().len());
        let user_bias = next(self.user_bias.len());
        let item_latent = next(self.item_latent.as_slice().len());
        let item_bias = next(self.item_bias.len());
        let (sb, sg) = self
            .side
            .as_ref()
            .map_or((0, 0), |s| (s.body.as_slice().len(), s.garment.as_slice().len()));
        let side_body = next(sb);
        let side_garment = next(sg);
        Layout {
            global_bias,
            user_latent,
            user_bias,
            item_latent,
            item_bias,
            side_body,
            side_garment,
            total: next(0),
        }
    }

    /// Parameters in the order: global bias, user latents, user biases,
    /// item latents, item biases, then the body and garment side maps.
    pub fn params(&self) -> Vec<f64> {
        let mut out = vec![self.global_bias];
        out.extend_from_slice(self.user_latent.as_slice());
        out.extend_from_slice(&self.user_bias);
        out.extend_from_slice(self.item_latent.as_slice());
        out.extend_from_slice(&self.item_bias);
        if let Some(s) = &self.side {
            out.extend_from_slice(s.body.as_slice());
            out.extend_from_slice(s.garment.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), CfError> {
        let layout = self.layout();
        if flat.len() != layout.total {
            return Err(CfError::Dimension {
                what: "parameter vector",
                expected: layout.total,
                found: flat.len(),
            });
        }
        self.global_bias = flat[0];
        let n = self.user_latent.as_slice().len();
        self.user_latent.as_mut_slice().copy_from_slice(&flat[layout.user_latent..layout.user_latent + n]);
        let n = self.user_bias.len();
        self.user_bias.copy_from_slice(&flat[layout.user_bias..layout.user_bias + n]);
        let n = self.item_latent.as_slice().len();
        self.item_latent.as_mut_slice().copy_from_slice(&flat[layout.item_latent..layout.item_latent + n]);
        let n = self.item_bias.len();
        self.item_bias.copy_from_slice(&flat[layout.item_bias..layout.item_bias + n]);
        if let Some(s) = &mut self.side {
            let n = s.body.as_slice().len();
            s.body.as_mut_slice().copy_from_slice(&flat[layout.side_body..layout.side_body + n]);
            let n = s.garment.as_slice().len();
            s.garment.as_mut_slice().copy_from_slice(&flat[layout.side_garment..layout.side_garment + n]);
        }
        Ok(())
    }
}

/// Labeled training positives of the split, as (body, garment) pairs.
fn training_positives(config: &CFTrainConfig, catalog: &Catalog, split: &Split) -> Vec<(usize, usize)> {
    if config.propagated_labels {
        split
            .train_bodies
            .iter()
            .flat_map(|&b| split.train_positives[split.body_types[b]].iter().map(move |&g| (b, g)))
            .collect()
    } else {
        catalog
            .positives()
            .iter()
            .copied()
            .filter(|&(b, g)| split.is_trainable(b, g))
            .collect()
    }
}

fn epoch_pairs<R: Rng>(
    positives: &[(usize, usize)],
    split: &Split,
    per_positive: usize,
    rng: &mut R,
) -> Vec<(usize, usize, bool)> {
    let mut pairs = Vec::with_capacity(positives.len() * (1 + per_positive));
    for &(b, g) in positives {
        pairs.push((b, g, true));
        let negatives = &split.train_negatives[split.body_types[b]];
        if negatives.is_empty() {
            continue;
        }
        for _ in 0..per_positive {
            pairs.push((b, negatives[rng.random_range(0..negatives.len())], false));
        }
    }
    pairs.shuffle(rng);
    pairs
}

fn mean_loss(model: &CFModel, inputs: Option<&SideInputs>, pairs: &[(usize, usize, bool)]) -> f64 {
    pairs
        .iter()
        .map(|&(u, i, p)| bce_from_logit(pair_logit(model, inputs, u, i).0, p))
        .sum::<f64>()
        / pairs.len() as f64
}

pub fn cf_train(config: &CFTrainConfig, catalog: &Catalog, split: &Split, variant: CfVariant) -> Result<TrainedCF, CfError> {
    config.validate()?;
    let positives = training_positives(config, catalog, split);
    if positives.is_empty() {
        return Err(CfError::NoTrainingData("the split has no training positives".into()));
    }
    let (nb, ng) = (catalog.bodies().len(), catalog.garments().len());
    let d = config.latent_dim;

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sample_rng = init_rng.clone();
    sample_rng.set_stream(1);
    let mut side_rng = init_rng.clone();
    side_rng.set_stream(2);

    // Only entities that occur in training receive nonzero latents.
    let mut user_seen = vec![false; nb];
    let mut item_seen = vec![false; ng];
    for &(b, g) in &positives {
        user_seen[b] = true;
        item_seen[g] = true;
    }
    for &b in &split.train_bodies {
        if user_seen[b] {
            for &g in &split.train_negatives[split.body_types[b]] {
                item_seen[g] = true;
            }
        }
    }
    let s = config.init_scale;
    let mut latent = |seen: &[bool]| {
        let mut m = DenseMatrix::zeros(seen.len(), d);
        for (r, _) in seen.iter().enumerate().filter(|(_, &s)| s) {
            for v in m.row_mut(r) {
                *v = init_rng.random_range(-s..=s);
            }
        }
        m
    };
    let user_latent = latent(&user_seen);
    let item_latent = latent(&item_seen);

    let side = match variant {
        CfVariant::Agnostic => None,
        CfVariant::Aware => {
            let fit = |rows: Vec<Vec<f64>>| FeatureStats::fit(&rows).map_err(|e| CfError::Config(e.to_string()));
            let body_stats = fit(split.train_bodies.iter().map(|&b| catalog.body(b).features()).collect())?;
            let garment_stats = fit(
                split
                    .train_garments
                    .iter()
                    .map(|&g| garment_side_feature(catalog.garment(g)))
                    .collect(),
            )?;
            let mut map = |cols: usize| {
                let mut m = DenseMatrix::zeros(config.side_dim, cols);
                if !config.zero_side {
                    let h = s / (cols as f64).sqrt();
                    for v in m.as_mut_slice() {
                        *v = side_rng.random_range(-h..=h);
                    }
                }
                m
            };
            Some(SideProjections {
                body: map(body_stats.dim()),
                garment: map(garment_stats.dim()),
                body_stats,
                garment_stats,
            })
        }
    };
    let mut model = CFModel {
        global_bias: 0.0,
        user_latent,
        user_bias: vec![0.0; nb],
        item_latent,
        item_bias: vec![0.0; ng],
        side,
    };
    let inputs = model.side.as_ref().map(|s| SideInputs::new(catalog, s));

    let schedule = config.schedule();
    let wd = config.weight_decay;
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut first_pairs = Vec::new();
    let mut initial_loss = f64::NAN;
    for epoch in 0..config.epochs {
        let lr = scheduled_rate(config.learning_rate, &schedule, epoch);
        let pairs = epoch_pairs(&positives, split, config.negatives_per_positive, &mut sample_rng);
        if epoch == 0 {
            initial_loss = mean_loss(&model, inputs.as_ref(), &pairs);
            first_pairs = pairs.clone();
        }
        let mut total = 0.0;
        for (step, &(u, i, positive)) in pairs.iter().enumerate() {
            let (z, side) = pair_logit(&model, inputs.as_ref(), u, i);
            let loss = bce_from_logit(z, positive);
            if !loss.is_finite() {
                return Err(CfError::NonFiniteLoss { epoch, step });
            }
            total += loss;
            let g = sigmoid(z) - if positive { 1.0 } else { 0.0 };

            model.global_bias -= lr * (g + wd * model.global_bias);
            model.user_bias[u] -= lr * (g + wd * model.user_bias[u]);
            model.item_bias[i] -= lr * (g + wd * model.item_bias[i]);
            let xu = model.user_latent.row(u).to_vec();
            let yi = model.item_latent.row(i).to_vec();
            for (x, y) in model.user_latent.row_mut(u).iter_mut().zip(&yi) {
                *x -= lr * (g * y + wd * *x);
            }
            for (y, x) in model.item_latent.row_mut(i).iter_mut().zip(&xu) {
                *y -= lr * (g * x + wd * *y);
            }
            if let (Some((vb, vg)), Some(inp), Some(s)) = (side, inputs.as_ref(), model.side.as_mut()) {
                let (fb, fg) = (&inp.bodies[u], &inp.garments[i]);
                for r in 0..vb.len() {
                    for (w, f) in s.body.row_mut(r).iter_mut().zip(fb) {
                        *w -= lr * (g * vg[r] * f + wd * *w);
                    }
                    for (w, f) in s.garment.row_mut(r).iter_mut().zip(fg) {
                        *w -= lr * (g * vb[r] * f + wd * *w);
                    }
                }
            }
        }
        loss_history.push(total / pairs.len() as f64);
    }
    let final_loss = mean_loss(&model, inputs.as_ref(), &first_pairs);
    if !final_loss.is_finite() {
        return Err(CfError::NonFiniteLoss {
            epoch: config.epochs,
            step: 0,
        });
    }
    Ok(TrainedCF {
        model,
        loss_history,
        initial_loss,
        final_loss,
    })
}
