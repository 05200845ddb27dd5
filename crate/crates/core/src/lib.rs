//! # hairline-core
//!
//! Measures how facial hairstyle shifts face-recognition score distributions
//! and builds the controlled training inputs used to study it.
//!
//! - [`ingest`]: manifest, attribute scores, embeddings, landmarks, masks
//! - [`labeling`]: clean-shaven / facial-hair / excluded labels
//! - [`pairs`]: CS-CS, CS-FH, FH-FH genuine and impostor statistics and d-prime
//! - [`manifest_builder`]: across-subject and within-subject training manifests
//! - [`augment`]: facial-hair transfer and random-pixel augmentation
//! - [`synth`]: synthetic cohorts with planted score structure
//! - [`report`]: SVG figures and CSV tables
//!
//! Everything operates on precomputed model outputs; no neural network runs
//! here. All randomness is keyed by explicit seeds (see [`seed`]).

pub mod augment;
mod error;
pub mod ingest;
pub mod labeling;
pub mod manifest_builder;
pub mod pairs;
pub mod report;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
