//! Neural-anchor radiance fields rendered by ray tracing Gaussian anchors.
//!
//! Each ray is sampled analytically at the peak response of every anchor
//! ellipsoid it crosses, neighbouring samples along the ray are blended by a
//! windowed softmax, and the blended features are decoded by small MLPs and
//! alpha-composited front to back.

pub mod bench;
pub mod cli;
pub mod error;
pub mod field;
pub mod image;
pub mod io;
pub mod math;
pub mod rca;
pub mod render;
pub mod ris;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use math::{NeuralAnchor, Ray};
pub use scene::Scene;
