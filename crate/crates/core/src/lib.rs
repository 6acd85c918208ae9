//! Change-based sequential descriptors for visual place recognition.
//!
//! A traverse is an ordered stream of global image descriptors (one row per
//! observed place). This crate turns such streams into *delta descriptors*
//! (the difference between the mean of the next `l` frames and the mean of
//! the previous `l` frames), matches a query traverse against a reference
//! traverse with cosine distance, and scores the result against ground truth.
//!
//! Everything operates on precomputed descriptors, so any global descriptor
//! (NetVLAD, pooled CNN features, ...) can be used as input.
//!
//! # Quick start
//! ```
//! use delta_vpr::{matching, synth, transform, evaluation};
//!
//! let params = synth::SynthParams {
//!     frames: 300,
//!     dim: 32,
//!     offset_scale: 0.5,
//!     ..synth::SynthParams::default()
//! };
//! let (reference, query, gt) = synth::generate_traverse_pair(&params)?;
//!
//! let cfg = transform::DeltaConfig::new(8);
//! let dref = transform::delta(&reference, &cfg)?;
//! let dqry = transform::delta(&query, &cfg)?;
//!
//! let dist = matching::distance_matrix(&dqry, &dref)?;
//! let matches = matching::retrieve_best(&dist);
//! let curve = evaluation::evaluate_pr(&matches, &gt, None)?;
//! assert!(curve.max_f1() > 0.5);
//! # Ok::<(), delta_vpr::Error>(())
//! ```
//!
//! # Modules
//! - [`series`]: descriptor series container, normalization, shuffling.
//! - [`transform`]: smoothed and delta descriptors, multi-span banks.
//! - [`matching`]: cosine distance matrices, sequence aggregation, retrieval.
//! - [`reduction`]: PCA fitting and projection.
//! - [`calibration`]: sequence-length estimation from self-distance profiles.
//! - [`evaluation`]: precision-recall curves and dimension ranking.
//! - [`synth`]: seeded synthetic traverse pairs with ground truth.
//! - [`io`]: descriptor files, CSV/JSON outputs.
//! - [`pipeline`]: end-to-end run configuration used by the CLI.

pub mod calibration;
mod error;
pub mod evaluation;
pub mod io;
pub mod matching;
pub mod pipeline;
pub mod reduction;
pub mod series;
pub mod synth;
pub mod transform;

pub use error::{Error, ErrorKind, Result};
pub use evaluation::PrCurve;
pub use matching::{DistanceMatrix, MatchSet};
pub use series::{DescriptorSeries, GroundTruth, RadiusMode};
pub use transform::{DeltaBank, DeltaConfig, Padding};
