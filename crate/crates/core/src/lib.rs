//! Instrumental-variable estimators and their MSE-minimizing convex
//! combination.
//!
//! The crate is `no_std` (with `alloc`). Work that fans out over
//! replicates or Monte Carlo iterations takes an [`exec::Executor`]; the
//! [`exec::Sequential`] executor ships here and threaded executors live
//! in the std companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bootstrap;
pub mod cls;
pub mod data;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod linalg;
pub mod rng;
pub mod simulation;

pub use bootstrap::{BootstrapMoments, BootstrapPlan};
pub use cls::{ClsChoice, ClsResult, MseParts};
pub use data::{Dataset, PartitionedDataset};
pub use error::{Error, Result};
pub use estimators::{EstimatorTag, FitResult, PairStats};
pub use simulation::{McSummary, Model, ScenarioSpec};
