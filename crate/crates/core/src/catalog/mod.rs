//! Bodies, garments and observed body–garment interactions.

mod io;
mod preprocess;
mod synthetic;

pub use io::{
    load_catalog, load_dataset, read_body_file, read_catalog, read_oracle, read_planted, save_catalog, save_dataset,
    write_atomic,
    write_catalog, write_oracle, write_planted, DatasetPaths,
};
pub use preprocess::{median_aggregate, standardize, FeatureStats, StandardizationStats};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const SMPL_DIM: usize = 10;
pub const VITALS_DIM: usize = 4;
pub const BODY_FEATURE_DIM: usize = SMPL_DIM + VITALS_DIM;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: non-binary attribute value {value:?}")]
    NonBinaryAttribute { line: usize, value: String },
    #[error("line {line}: unknown {kind} id {id:?}")]
    UnknownId { line: usize, kind: &'static str, id: String },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("invalid {what}: {message}")]
    Invalid { what: String, message: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CatalogError {
    fn invalid(what: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            what: what.into(),
            message: message.into(),
        }
    }
}

/// One person: shape coefficients plus height, bust, waist and hips (cm).
#[derive(Debug, Clone, PartialEq)]
pub struct BodyRecord {
    pub id: String,
    pub smpl: [f64; SMPL_DIM],
    pub vitals: [f64; VITALS_DIM],
}

impl BodyRecord {
    pub fn new(id: impl Into<String>, smpl: [f64; SMPL_DIM], vitals: [f64; VITALS_DIM]) -> Result<Self, CatalogError> {
        let id = id.into();
        validate_id(&id)?;
        if smpl.iter().chain(&vitals).any(|v| !v.is_finite()) {
            return Err(CatalogError::invalid(format!("body {id}"), "non-finite feature"));
        }
        if vitals.iter().any(|v| *v <= 0.0) {
            return Err(CatalogError::invalid(format!("body {id}"), "vital statistics must be positive"));
        }
        Ok(Self { id, smpl, vitals })
    }

    /// Shape coefficients followed by vital statistics.
    pub fn features(&self) -> Vec<f64> {
        self.smpl.iter().chain(&self.vitals).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GarmentCategory {
    Dress,
    Top,
}

impl GarmentCategory {
    /// Vocabulary size used for this category unless configured otherwise.
    pub fn default_attribute_count(self) -> usize {
        match self {
            Self::Dress => 64,
            Self::Top => 100,
        }
    }
}

impl fmt::Display for GarmentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dress => "dress",
            Self::Top => "top",
        })
    }
}

impl FromStr for GarmentCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dress" => Ok(Self::Dress),
            "top" => Ok(Self::Top),
            other => Err(format!("unknown garment category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarmentRecord {
    pub id: String,
    pub category: GarmentCategory,
    pub attributes: Vec<bool>,
    pub visual: Vec<f64>,
}

impl GarmentRecord {
    pub fn new(
        id: impl Into<String>,
        category: GarmentCategory,
        attributes: Vec<bool>,
        visual: Vec<f64>,
    ) -> Result<Self, CatalogError> {
        let id = id.into();
        validate_id(&id)?;
        if visual.iter().any(|v| !v.is_finite()) {
            return Err(CatalogError::invalid(format!("garment {id}"), "non-finite visual feature"));
        }
        Ok(Self {
            id,
            category,
            attributes,
            visual,
        })
    }

    pub fn attribute_values(&self) -> Vec<f64> {
        self.attributes.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect()
    }
}

fn validate_id(id: &str) -> Result<(), CatalogError> {
    if id.is_empty() || id.chars().any(char::is_whitespace) || id.starts_with('#') || id.starts_with('[') {
        return Err(CatalogError::invalid("id", format!("{id:?} is empty or contains whitespace")));
    }
    Ok(())
}

/// Ground-truth compatibility for every (body, garment) pair; synthetic only.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    n_garments: usize,
    compatible: Vec<bool>,
}

impl Oracle {
    pub fn new(n_bodies: usize, n_garments: usize, compatible: Vec<bool>) -> Result<Self, CatalogError> {
        if compatible.len() != n_bodies * n_garments {
            return Err(CatalogError::invalid("oracle", "size does not match catalog"));
        }
        Ok(Self {
            n_garments,
            compatible,
        })
    }

    pub fn is_compatible(&self, body: usize, garment: usize) -> bool {
        self.compatible[body * self.n_garments + garment]
    }
}

/// Planted generator labels kept alongside a synthetic catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTypes {
    pub body_types: Vec<usize>,
    /// Types each garment is compatible with, ascending.
    pub garment_types: Vec<Vec<usize>>,
    /// Attribute indices of each type's indicator block.
    pub indicator_attributes: Vec<Vec<usize>>,
}

impl PlantedTypes {
    pub fn num_types(&self) -> usize {
        self.indicator_attributes.len()
    }
}

/// Validated collection of bodies, garments and positive pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    bodies: Vec<BodyRecord>,
    garments: Vec<GarmentRecord>,
    positives: BTreeSet<(usize, usize)>,
    attribute_vocabulary: Vec<String>,
    oracle: Option<Oracle>,
    planted: Option<PlantedTypes>,
    body_index: HashMap<String, usize>,
    garment_index: HashMap<String, usize>,
}

impl Catalog {
    /// Builds a catalog; positives are given as (body index, garment index).
    pub fn new(
        bodies: Vec<BodyRecord>,
        garments: Vec<GarmentRecord>,
        positives: impl IntoIterator<Item = (usize, usize)>,
        attribute_vocabulary: Vec<String>,
    ) -> Result<Self, CatalogError> {
        let mut body_index = HashMap::with_capacity(bodies.len());
        for (i, b) in bodies.iter().enumerate() {
            if body_index.insert(b.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId {
                    kind: "body",
                    id: b.id.clone(),
                });
            }
        }
        let mut garment_index = HashMap::with_capacity(garments.len());
        for (i, g) in garments.iter().enumerate() {
            if garment_index.insert(g.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId {
                    kind: "garment",
                    id: g.id.clone(),
                });
            }
        }
        if let Some(first) = garments.first() {
            let a = attribute_vocabulary.len();
            let v = first.visual.len();
            for g in &garments {
                if g.category != first.category {
                    return Err(CatalogError::invalid(
                        format!("garment {}", g.id),
                        format!("category {} differs from catalog category {}", g.category, first.category),
                    ));
                }
                if g.attributes.len() != a {
                    return Err(CatalogError::invalid(
                        format!("garment {}", g.id),
                        format!("{} attributes, vocabulary has {a}", g.attributes.len()),
                    ));
                }
                if g.visual.len() != v {
                    return Err(CatalogError::invalid(
                        format!("garment {}", g.id),
                        format!("{} visual features, expected {v}", g.visual.len()),
                    ));
                }
            }
        }
        let positives: BTreeSet<(usize, usize)> = positives.into_iter().collect();
        if let Some(&(b, g)) = positives
            .iter()
            .find(|(b, g)| *b >= bodies.len() || *g >= garments.len())
        {
            return Err(CatalogError::invalid("positive pair", format!("index ({b}, {g}) out of range")));
        }
        Ok(Self {
            bodies,
            garments,
            positives,
            attribute_vocabulary,
            oracle: None,
            planted: None,
            body_index,
            garment_index,
        })
    }

    pub fn with_oracle(mut self, oracle: Oracle) -> Result<Self, CatalogError> {
        if oracle.compatible.len() != self.bodies.len() * self.garments.len() {
            return Err(CatalogError::invalid("oracle", "size does not match catalog"));
        }
        self.oracle = Some(oracle);
        Ok(self)
    }

    pub fn with_planted(mut self, planted: PlantedTypes) -> Result<Self, CatalogError> {
        if planted.body_types.len() != self.bodies.len() || planted.garment_types.len() != self.garments.len() {
            return Err(CatalogError::invalid("planted types", "size does not match catalog"));
        }
        self.planted = Some(planted);
        Ok(self)
    }

    pub fn bodies(&self) -> &[BodyRecord] {
        &self.bodies
    }

    pub fn garments(&self) -> &[GarmentRecord] {
        &self.garments
    }

    pub fn body(&self, index: usize) -> &BodyRecord {
        &self.bodies[index]
    }

    pub fn garment(&self, index: usize) -> &GarmentRecord {
        &self.garments[index]
    }

    /// Positive (body index, garment index) pairs in ascending order.
    pub fn positives(&self) -> &BTreeSet<(usize, usize)> {
        &self.positives
    }

    pub fn attribute_vocabulary(&self) -> &[String] {
        &self.attribute_vocabulary
    }

    pub fn oracle(&self) -> Option<&Oracle> {
        self.oracle.as_ref()
    }

    pub fn planted(&self) -> Option<&PlantedTypes> {
        self.planted.as_ref()
    }

    pub fn body_index(&self, id: &str) -> Option<usize> {
        self.body_index.get(id).copied()
    }

    pub fn garment_index(&self, id: &str) -> Option<usize> {
        self.garment_index.get(id).copied()
    }

    pub fn category(&self) -> Option<GarmentCategory> {
        self.garments.first().map(|g| g.category)
    }

    pub fn attribute_dim(&self) -> usize {
        self.attribute_vocabulary.len()
    }

    pub fn visual_dim(&self) -> usize {
        self.garments.first().map_or(0, |g| g.visual.len())
    }
}
