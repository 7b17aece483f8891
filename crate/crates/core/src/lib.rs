//! Body-aware garment recommendation.
//!
//! Bodies and garments are mapped into a shared unit-sphere embedding where
//! a body lies close to garments that suit it. The crate covers the full
//! desk-scale pipeline: catalog ingestion and synthetic generation, body-type
//! quantization with label propagation, embedding training with dual
//! margin losses, collaborative-filtering baselines, cold-start evaluation,
//! and attribute-level explanations.

pub mod numkit;
pub mod catalog;
pub mod typing;
pub mod embed;
pub mod cf;
pub mod eval;
pub mod method;
pub mod explain;
pub mod checkpoint;
