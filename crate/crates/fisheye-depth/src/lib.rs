//! Self-supervised depth estimation toolkit for fisheye cameras.
//!
//! The crate bundles the machinery needed to recover dense depth from short
//! grayscale fisheye snippets without ground truth:
//!
//! - [`camera`]: polynomial fisheye projection/unprojection and the rectified
//!   intermediate grid used for closed-form unprojection.
//! - [`warp`]: bilinear sampling and cross-view synthesis.
//! - [`loss`]: photometric min-reprojection, edge-aware smoothness, ordinal
//!   and scale-invariant distillation, and the decay-weighted combination.
//! - [`depth_param`]: the per-pixel logit parameterization of the unknown
//!   depth field, with its multi-scale pyramid.
//! - [`optim`]: hand-derived gradients through the full loss, finite
//!   difference checking, and a deterministic first-order optimizer.
//! - [`oracle`]: a ray-cast renderer for synthetic fisheye snippets with
//!   exact depth and poses, plus order-preserving teacher corruption.
//! - [`metrics`]: standard depth-evaluation metrics with median scaling.
//! - [`io`]: PGM/PFM readers and writers, the key-value config format,
//!   snippet bundles, and teacher ingestion.

pub mod camera;
pub mod depth_param;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod raster;
pub mod warp;

pub use error::{Error, Result};
