//! Transition network analysis.
//!
//! Coded, timestamped event logs are grouped into sessions, tallied into
//! first-order Markov transition models and then analysed as weighted
//! directed networks:
//!
//! - [`sequence`]: ingestion, sessionization and unit selection.
//! - [`markov`]: tallying, estimation, likelihoods and simulation.
//! - [`graph`]: centralities, dyads, cliques, spin-glass communities and
//!   subtraction networks.
//! - [`mixture`]: mixture Markov clustering with covariate-dependent priors.
//! - [`inference`]: bootstrap edge validation, permutation comparison,
//!   disparity filter and case-dropping stability.
//! - [`export`]: matrix CSV, DOT and GraphML writers.
//!
//! Resampling loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results are
//! identical either way because every replicate draws from its own
//! sub-seeded generator.

pub mod error;
pub mod export;
pub mod graph;
pub mod inference;
pub mod markov;
pub mod mixture;
pub mod par;
pub mod sequence;
pub mod stats;

pub use error::{ErrorKind, Result, TnaError};
pub use graph::TransitionNetwork;
pub use markov::{CountMatrix, Scaling, TransitionModel};
pub use sequence::{Alphabet, EventLog, StateSequence};
