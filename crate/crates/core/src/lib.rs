//! RegionFocus: visual test-time scaling for GUI agents.
//!
//! When an agent's action has no visible effect (or its own judge rejects a
//! predicted point), the pipeline asks the model for a focal point, zooms
//! into several fixed-ratio regions around it, predicts one action per
//! region and lets the model pick among the candidates, which are drawn as
//! numbered stars on the screenshot. Earlier focal points stay on the image
//! as stars so the model does not revisit them.

pub mod actions;
pub mod agent;
pub mod canvas;
pub mod environment;
pub mod evalkit;
pub mod fixtures;
pub mod focus;
pub mod gateway;
pub mod geometry;
pub mod scalar;

pub use canvas::{Digest, Screenshot};
pub use geometry::{Dims, Point};
pub use scalar::Scalar;

/// Ratio with `f64` arithmetic, the precision the pipeline runs at.
pub type Ratio = geometry::Ratio<f64>;
pub type RegionBox = geometry::RegionBox<f64>;
pub type ZoomSpec = geometry::ZoomSpec<f64>;
