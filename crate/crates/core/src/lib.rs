//! Hierarchical heavy hitters over IP prefix lattices.
//!
//! [`sketch::RhhhSketch`] updates at most one randomly chosen lattice node per
//! packet, [`sketch::FullUpdateSketch`] updates all of them, and
//! [`oracle::ExactCounts`] computes the exact answer for validation.
//!
//! Multi-seed evaluation in [`experiment`] uses rayon when the default
//! `parallel` feature is enabled.

pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod sketch;
pub mod spacesaving;
pub mod stats;

pub use error::{Error, Result};
pub use experiment::{Algorithm, AnySketch, SketchConfig};
pub use hierarchy::{HierarchyKind, HierarchySpec, PacketKey, Prefix, PrefixPattern};
pub use metrics::EvalReport;
pub use oracle::{count_exact, ExactCounts};
pub use sketch::{ConfidenceMode, FullUpdateSketch, HhhCandidate, HhhSketch, RhhhSketch};
pub use stats::ConfidenceParams;
