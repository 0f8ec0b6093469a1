//! Curriculum training for combining two out-of-domain datasets.
//!
//! The crate covers the whole path from frame-labelled clip manifests to
//! strategy comparisons:
//!
//! - [`dataset_model`]: clip manifests, the action-class registry, subject filters.
//! - [`clip_pipeline`]: fixed-length windowing, majority-label retention, frame subsampling.
//! - [`sampling`]: class-balanced oversampling, balanced subset splits, pool files.
//! - [`trainer`]: a deterministic softmax classifier with a from-scratch AdamW and a
//!   bit-exact checkpoint format.
//! - [`curriculum`]: schedule construction (naive combination, two-step fine-tuning,
//!   progressive expansion) and round execution with checkpoint handoff.
//! - [`benchgen`]: seeded three-domain feature benchmarks with tunable domain gaps.
//! - [`metrics_report`]: top-1 accuracy, confusion matrices, iteration-efficiency
//!   reports, tables and SVG plots.

pub mod benchgen;
pub mod clip_pipeline;
pub mod curriculum;
pub mod dataset_model;
pub mod experiment;
mod error;
pub mod metrics_report;
pub mod sampling;
pub mod seed;
pub mod svg;
pub mod trainer;

pub use error::{Error, Result};
