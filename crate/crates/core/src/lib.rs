//! Long-tailed multi-label classification with feature-space augmentation of
//! tail labels.
//!
//! The pipeline has two stages. Stage 1 learns document representations and a
//! sigmoid classifier over all labels. Stage 2 collects difference vectors
//! between pairs of documents of the same head label, transfers them onto tail
//! label prototypes through a learned matrix, and retrains the tail rows of
//! the classifier on the generated instances.
//!
//! | module | role |
//! |---|---|
//! | [`corpus`] | corpus, embedding and feature file ingestion; head/tail split |
//! | [`synthgen`] | synthetic long-tailed datasets in feature space |
//! | [`extractor`] | attention pooling, classifier, BCE, stage-1 training |
//! | [`relations`] | pairwise relations of head labels |
//! | [`eigen`] | head scatter matrix and its top eigenvectors |
//! | [`generator`] | tail prototypes, generation, transfer losses, `W` training |
//! | [`tailadjust`] | tail classifier retraining |
//! | [`metrics`] | P@k, nDCG@k, macro-F1, pooled t-test |
//! | [`checkpoint`] | text checkpoint container |
//! | [`pipeline`] | end-to-end orchestration, ablations, sweeps |

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod eigen;
pub mod error;
pub mod extractor;
pub mod generator;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod relations;
pub mod rng;
pub mod synthgen;
pub mod tailadjust;

pub use error::{Error, Result};
pub use linalg::Matrix;
