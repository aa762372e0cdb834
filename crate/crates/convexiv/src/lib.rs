//! CSV ingestion, a rayon executor and the `convexiv` command-line tool
//! built on `convexiv-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;
