//! Clinically-tailored figures of merit for model selection.
//!
//! The crate scores binary classifiers with metrics that reflect a clinical
//! operating point (sliver AUC, sensitivity at a specificity floor, Fisher
//! distance) rather than validation loss, and provides the surrounding
//! machinery: k-fold score alignment, object-to-subject aggregation,
//! per-epoch selection, black-box hyperparameter search and seeded synthetic
//! generators.

pub mod aggregate;
pub mod epochselect;
pub mod foldalign;
pub mod fom;
pub mod hypersearch;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod scoreset;
pub mod svg;
pub mod synthlab;
