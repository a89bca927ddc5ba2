//! Training and evaluation of one-class recommenders from similar pairs only.
//!
//! Representations are learned without sampled negatives: a base term pulls each user
//! towards the items they interacted with, a hinge on the average pairwise distance
//! keeps the representations from collapsing to a point, and a decorrelation term keeps
//! the dimensions from collapsing onto a line. The [`diagnostics`] module tells the
//! collapsed, partially collapsed and shrinking regimes apart.

pub mod checkpoint;
pub mod diagnostics;
pub mod encoder;
mod error;
pub mod evaluation;
pub mod interactions;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};
