//! Heterogeneous decentralized data fusion on Gaussian factor graphs.
//!
//! Robots keep canonical-form factor graphs over their own task variables,
//! filter them conservatively, and exchange marginals over the variables they
//! share with neighbors, through either a channel filter or covariance
//! intersection. [`scenarios`] drives multi-robot tracking and cooperative
//! localization experiments and [`eval`] turns Monte-Carlo batches into CSV
//! and SVG artifacts.

pub mod app;
pub mod error;
pub mod eval;
pub mod filtering;
pub mod fusion;
pub mod gaussian;
pub mod graph;
pub mod linalg;
pub mod network;
pub mod scenarios;

pub use error::{Error, Result};
