//! Temporal-relation pipeline over classifier logits.
//!
//! The crate trains a small linear classifier with a Dirichlet-prior
//! objective (sharp targets for labeled event pairs, flat targets for Vague
//! ones), then runs its per-instance predictions through a fixed inference
//! chain: counterfactual debiasing → renormalization → temperature scaling
//! → entropy-thresholded abstention. Committed pairwise decisions are
//! assembled into per-document timelines by deleting the weakest cycle
//! edges and topologically sorting.
//!
//! Module map: [`preprocess`] (context windows, event markers, feature
//! hashing), [`model`] (linear classifier + training loop), [`dirichlet`]
//! (targets, KL, analytic gradients), [`counterfactual`] (bias subtraction
//! and the β grid search), [`calibrate`] (normalization, temperature, ECE,
//! abstention threshold), [`pipeline`] (the fixed stage order), [`timeline`]
//! (relation graph → DAG → ordering), [`metrics`] (scoped F1), [`synth`]
//! (biased corpus generator), [`records`]/[`config`] (file formats).

pub mod calibrate;
pub mod config;
pub mod counterfactual;
pub mod dirichlet;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod preprocess;
pub mod records;
pub mod special;
pub mod synth;
pub mod timeline;
pub mod types;

pub use error::{Error, Result};
pub use types::{Categorical, Decision, DirichletParams, LabelSet, Logits, VAGUE};
