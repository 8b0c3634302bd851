//! Multi-view depth fusion from per-pixel Gaussian depth priors.
//!
//! Candidates are drawn from each pixel's prior, scored against neighbouring
//! views with a depth-consistency gate, and the prior is refined by moment
//! matching over the softmax of the scores.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod matching;
pub mod metrics;
pub mod probability;
pub mod synthetic;

pub use error::{Error, Result};
pub use fusion::{refine, refine_from, FusionConfig, SamplingMode};
pub use geometry::{CameraIntrinsics, CameraPose};
pub use grid::{Grid, Mask};
pub use matching::{build_cost_volume, CostVolume, FeatureMap, Frame, Window};
pub use metrics::{compute_metrics, MetricsReport};
pub use probability::{sample_candidates, BinCoefficients, GaussianDepthMap};
