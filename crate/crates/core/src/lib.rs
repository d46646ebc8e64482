//! Core of the genderprobe toolkit.
//!
//! Everything in this crate is pure computation over immutable values and
//! builds without `std` (an allocator is required). File IO, model backends,
//! the score store on disk, report rendering, and the command line live in
//! the `genderprobe` companion crate.
//!
//! The pipeline is:
//!
//! 1. [`lexicon`] holds the term inventories (sex characteristics, gender
//!    identifiers, illnesses, non-human baseline nouns).
//! 2. [`probes`] expands a lexicon into context/completion sentence suites.
//! 3. [`scoring`] defines the [`scoring::Scorer`] contract, score records and
//!    cache keys; [`mock`] provides a deterministic table-driven scorer.
//! 4. [`metrics`] computes the log-probability-ratio metrics.
//! 5. [`stats`] and [`analysis`] provide the nonparametric tests, density
//!    estimates and aggregated views used by reports.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod format;
pub mod lexicon;
pub mod metrics;
pub mod mock;
pub mod probes;
pub mod scoring;
pub mod stats;

pub use lexicon::{Lexicon, LexiconError};
pub use metrics::{MetricError, MetricKind, MetricResult, ScoreIndex};
pub use probes::{Probe, Suite};
pub use scoring::{ModelDescriptor, ScoreError, ScoreRecord, ScoreStore, Scorer, ScorerKind};

/// Version string stamped into run manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
