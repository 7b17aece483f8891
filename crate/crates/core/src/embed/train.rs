use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{total_loss_and_gradient, EmbedError, Margins, TripletSampler, ViBEModel};
use crate::catalog::{Catalog, FeatureStats, StandardizationStats};
use crate::numkit::{adam_step, AdamState};
use crate::typing::Split;

#[derive(Debug, Clone, PartialEq)]
pub struct ViBETrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `(epoch, multiplier)` learning-rate steps.
    pub schedule: Vec<(usize, f64)>,
    pub epochs: usize,
    /// Triplets of each kind per batch.
    pub triplets_per_batch: usize,
    pub batches_per_epoch: usize,
    pub margins: Margins,
    pub seed: u64,
    /// Include the body–body term of the loss.
    pub body_body_loss: bool,
    /// Train only on the bodies (and their garments) of the most populous
    /// type, as the body-agnostic embedding baseline does.
    pub largest_type_only: bool,
}

impl Default for ViBETrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            weight_decay: 0.01,
            schedule: vec![(100, 0.3), (130, 0.3)],
            epochs: 180,
            triplets_per_batch: 64,
            batches_per_epoch: 20,
            margins: Margins::default(),
            seed: 0,
            body_body_loss: true,
            largest_type_only: false,
        }
    }
}

impl ViBETrainConfig {
    /// The body-agnostic embedding baseline: one type's data, no body–body
    /// term, its own optimizer settings.
    pub fn agnostic() -> Self {
        Self {
            learning_rate: 0.05,
            schedule: vec![(70, 0.3), (100, 0.3)],
            epochs: 130,
            body_body_loss: false,
            largest_type_only: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        let fail = |m: String| Err(EmbedError::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if let Some((at, _)) = self.schedule.iter().find(|(at, _)| *at >= self.epochs) {
            return fail(format!("schedule step at epoch {at} is not before the final epoch {}", self.epochs));
        }
        if self.schedule.iter().any(|(_, m)| !(*m > 0.0) || !m.is_finite()) {
            return fail("schedule multipliers must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) || self.learning_rate * self.weight_decay >= 1.0 {
            return fail(format!("weight decay {} out of range", self.weight_decay));
        }
        if self.triplets_per_batch == 0 || self.batches_per_epoch == 0 {
            return fail("batches need at least one triplet and epochs at least one batch".into());
        }
        Margins::new(self.margins.alpha_p, self.margins.alpha_n)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedViBE {
    pub model: ViBEModel,
    /// Mean total batch loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Type with the most bodies in the catalog; ties go to the lowest index.
pub(crate) fn largest_type(split: &Split) -> usize {
    let mut counts = vec![0usize; split.num_types()];
    for &t in &split.body_types {
        counts[t] += 1;
    }
    let mut best = 0;
    for (t, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = t;
        }
    }
    best
}

/// Standardization fitted on the training bodies and training garments.
fn training_stats(catalog: &Catalog, split: &Split) -> Result<StandardizationStats, EmbedError> {
    let fit = |rows: Vec<&[f64]>| FeatureStats::fit(&rows).map_err(|e| EmbedError::Config(e.to_string()));
    Ok(StandardizationStats {
        smpl: fit(split.train_bodies.iter().map(|&b| &catalog.body(b).smpl[..]).collect())?,
        vitals: fit(split.train_bodies.iter().map(|&b| &catalog.body(b).vitals[..]).collect())?,
        visual: fit(split.train_garments.iter().map(|&g| &catalog.garment(g).visual[..]).collect())?,
    })
}

pub fn train_vibe(config: &ViBETrainConfig, catalog: &Catalog, split: &Split) -> Result<TrainedViBE, EmbedError> {
    config.validate()?;
    if split.body_types.len() != catalog.bodies().len() {
        return Err(EmbedError::Config("split does not belong to this catalog".into()));
    }
    let restriction = config.largest_type_only.then(|| vec![largest_type(split)]);
    let sampler = TripletSampler::new(split, restriction.as_deref(), config.body_body_loss)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sample_rng = init_rng.clone();
    sample_rng.set_stream(1);
    let stats = training_stats(catalog, split)?;
    let mut model = ViBEModel::random(catalog.attribute_dim(), catalog.visual_dim(), stats, &mut init_rng)?;
    let inputs = model.encode(catalog)?;

    let mut params = model.params();
    let mut adam = AdamState::new(params.len(), config.learning_rate, config.weight_decay, config.schedule.clone());
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for batch_index in 0..config.batches_per_epoch {
            let batch = sampler.sample(config.triplets_per_batch, &mut sample_rng);
            let wrap = |source| EmbedError::Training {
                epoch,
                batch: batch_index,
                source,
            };
            let (loss, grad) = match total_loss_and_gradient(&model, &inputs, &batch, config.margins) {
                Ok(v) => v,
                Err(EmbedError::Numeric(e)) => return Err(wrap(e)),
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() {
                return Err(EmbedError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            epoch_loss += loss.total;
            adam_step(&mut params, &grad, &mut adam, epoch).map_err(wrap)?;
            model.set_params(&params).map_err(|e| match e {
                EmbedError::Numeric(e) => wrap(e),
                other => other,
            })?;
        }
        loss_history.push(epoch_loss / config.batches_per_epoch as f64);
    }
    Ok(TrainedViBE { model, loss_history })
}
