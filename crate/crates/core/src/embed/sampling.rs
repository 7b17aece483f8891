use rand::Rng;

use super::EmbedError;
use crate::typing::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripletKind {
    /// Body anchor, garment positive and negative.
    BodyCloth,
    /// Body anchor, same-type body positive, other-type body negative.
    BodyBody,
}

/// Catalog indices of one training triplet. The anchor is always a body;
/// the positive and negative are garments or bodies depending on `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub kind: TripletKind,
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripletBatch {
    pub body_cloth: Vec<Triplet>,
    pub body_body: Vec<Triplet>,
}

impl TripletBatch {
    pub fn iter(&self) -> impl Iterator<Item = &Triplet> {
        self.body_cloth.iter().chain(&self.body_body)
    }
}

/// Uniform triplet sampler over the training partition of a split.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    body_types: Vec<usize>,
    cloth_anchors: Vec<usize>,
    body_anchors: Vec<usize>,
    members: Vec<Vec<usize>>,
    /// Training bodies of every type other than the index.
    others: Vec<Vec<usize>>,
    positives: Vec<Vec<usize>>,
    negatives: Vec<Vec<usize>>,
    warnings: Vec<String>,
}

impl TripletSampler {
    /// `types` restricts anchors (and therefore garments) to the listed body
    /// types; `None` uses all of them. Body–body triplets are only sampled
    /// when `body_body` is set.
    pub fn new(split: &Split, types: Option<&[usize]>, body_body: bool) -> Result<Self, EmbedError> {
        let k = split.num_types();
        let allowed: Vec<bool> = match types {
            None => vec![true; k],
            Some(list) => {
                let mut v = vec![false; k];
                for &t in list {
                    if t >= k {
                        return Err(EmbedError::Sampling(format!("type {t} does not exist")));
                    }
                    v[t] = true;
                }
                v
            }
        };
        let members: Vec<Vec<usize>> = split
            .train_members()
            .into_iter()
            .enumerate()
            .map(|(t, m)| if allowed[t] { m } else { Vec::new() })
            .collect();
        let mut warnings = Vec::new();

        let mut cloth_anchors = Vec::new();
        for t in 0..k {
            if members[t].is_empty() {
                continue;
            }
            if split.train_positives[t].is_empty() || split.train_negatives[t].is_empty() {
                warnings.push(format!("type {t} lacks training positives or negatives; skipped as a garment anchor"));
                continue;
            }
            cloth_anchors.extend_from_slice(&members[t]);
        }
        if cloth_anchors.is_empty() {
            return Err(EmbedError::Sampling("no training body has both positive and negative garments".into()));
        }
        cloth_anchors.sort_unstable();

        let others: Vec<Vec<usize>> = (0..k)
            .map(|t| (0..k).filter(|&u| u != t).flat_map(|u| members[u].iter().copied()).collect())
            .collect();
        let mut body_anchors = Vec::new();
        if body_body {
            for t in 0..k {
                match members[t].len() {
                    0 => {}
                    1 => warnings.push(format!("type {t} has a single training body; skipped as a body anchor")),
                    _ if others[t].is_empty() => {}
                    _ => body_anchors.extend_from_slice(&members[t]),
                }
            }
            if body_anchors.is_empty() {
                return Err(EmbedError::Sampling(
                    "body–body triplets need two types with training bodies, one of them with at least two".into(),
                ));
            }
            body_anchors.sort_unstable();
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self {
            body_types: split.body_types.clone(),
            cloth_anchors,
            body_anchors,
            members,
            others,
            positives: split.train_positives.clone(),
            negatives: split.train_negatives.clone(),
            warnings,
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn samples_body_body(&self) -> bool {
        !self.body_anchors.is_empty()
    }

    /// Bodies that can anchor a body–cloth triplet.
    pub fn cloth_anchors(&self) -> &[usize] {
        &self.cloth_anchors
    }

    /// Draws `count` triplets of each enabled kind.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> TripletBatch {
        let pick = |v: &[usize], rng: &mut R| v[rng.random_range(0..v.len())];
        let mut batch = TripletBatch::default();
        for _ in 0..count {
            let anchor = pick(&self.cloth_anchors, rng);
            let t = self.body_types[anchor];
            batch.body_cloth.push(Triplet {
                kind: TripletKind::BodyCloth,
                anchor,
                positive: pick(&self.positives[t], rng),
                negative: pick(&self.negatives[t], rng),
            });
        }
        if self.samples_body_body() {
            for _ in 0..count {
                let anchor = pick(&self.body_anchors, rng);
                let t = self.body_types[anchor];
                let same = &self.members[t];
                // uniform over the other members of the same type
                let mut positive = same[rng.random_range(0..same.len() - 1)];
                if positive == anchor {
                    positive = same[same.len() - 1];
                }
                batch.body_body.push(Triplet {
                    kind: TripletKind::BodyBody,
                    anchor,
                    positive,
                    negative: pick(&self.others[t], rng),
                });
            }
        }
        batch
    }
}

/// One batch of `count` triplets per kind over all training types.
pub fn sample_triplets<R: Rng + ?Sized>(split: &Split, count: usize, rng: &mut R) -> Result<TripletBatch, EmbedError> {
    Ok(TripletSampler::new(split, None, true)?.sample(count, rng))
}
