//! Toolkit for single-table text-to-SQL experiments over WikiSQL-style data.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] loads and validates example and table files and computes corpus statistics.
//! * [`sqlexec`] renders, canonicalizes and executes query sketches against in-memory tables.
//! * [`balance`] classifies comparison-condition questions and oversamples them.
//! * [`parser`] is a trainable sketch slot-filling parser used as the experimental baseline.
//! * [`evalharness`] scores predictions and runs ratio sweeps and k-fold experiments.
//! * [`synth`] generates seeded WikiSQL-shaped corpora for fixtures and desk-scale runs.
//!
//! Batch work (scoring, prediction, experiment grids) goes through [`parallel`], which uses
//! rayon when the `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod balance;
pub mod dataset;
pub mod error;
pub mod evalharness;
pub mod parallel;
pub mod parser;
pub mod seed;
pub mod sqlexec;
pub mod synth;

pub use error::{Error, Result};
