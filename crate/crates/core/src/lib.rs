//! Segment-aware adaptive block-size KV-cache eviction.
//!
//! The crate works on *attention traces*: a snapshot of the attention that
//! the most recent prompt tokens (the observation window) pay to every
//! earlier token. From a trace it
//!
//! 1. splits the compressible region into punctuation-bounded segments
//!    ([`segment`]),
//! 2. scores tokens by window attention and boosts them by a per-segment
//!    importance/diversity weight ([`scoring`]),
//! 3. picks a global top-B, derives per-segment budgets and searches the
//!    largest block size that keeps enough of the token-level score mass
//!    ([`blocksearch`]).
//!
//! Baseline policies ([`policies`]), diagnostic metrics ([`metrics`]) and
//! batch experiment drivers ([`experiment`]) are built on the same model.
//! Batch work is data-parallel through rayon when the `parallel` feature is
//! enabled (the default) and sequential otherwise; see [`exec`].

pub mod blocksearch;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod metrics;
pub mod policies;
pub mod scoring;
pub mod segment;
pub mod trace;

pub use blocksearch::{compress, CompressionPlan, SearchConfig, SegmentPlan};
pub use error::{Error, Result};
pub use exec::Exec;
pub use policies::{Policy, PolicyResult};
pub use scoring::{ScoreSet, ScoringConfig};
pub use segment::{Segment, SegmentConfig};
pub use trace::{AttentionTrace, NeedleSpan, SyntheticSpec, Token};
