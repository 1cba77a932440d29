//! Similarity networks for consumer panel data, built from revealed
//! preferences.
//!
//! The pipeline: resample a few decisions per agent into synthetic
//! datasets, partition each into jointly rational types (GARP_e), aggregate
//! co-typing frequencies into a similarity matrix `G`, threshold it into
//! networks `H^alpha`, and test how observable covariates align with the
//! network structure via label-shuffling permutation tests.
//!
//! Modules follow the pipeline stages:
//!
//! - [`data`]: observations, datasets, precision levels, CSV ingestion.
//! - [`relations`]: revealed-preference relations and GARP_e checking.
//! - [`cycles`]: elementary violating-cycle enumeration.
//! - [`ls`]: largest jointly-rational agent subset (exact + brute force).
//! - [`milp`]: LP-format export of the integer-programming formulation.
//! - [`partition`]: greedy and minimum partitions into rational types.
//! - [`simnet`]: synthetic resampling, similarity matrix, thresholding.
//! - [`netmetrics`]: network statistics and community detection.
//! - [`covtests`]: alignment metrics, permutation tests, effect sizes.
//! - [`datagen`]: simulated populations with planted types.
//! - [`report`]: CSV/JSON emission of pipeline artifacts.

pub mod covtests;
pub mod cycles;
pub mod data;
pub mod datagen;
pub mod error;
pub mod ls;
pub mod milp;
pub mod netmetrics;
pub mod partition;
pub mod relations;
pub mod report;
pub mod rng;
pub mod simnet;

#[doc(hidden)]
pub mod testkit;

pub use error::{Error, Result};
