//! Polarization imaging for microgrid color sensors: raw mosaic handling,
//! demosaicking, Stokes extraction and pseudo-color rendering, a synthetic
//! sensor model, water/sky polarization physics, and detection dataset and
//! evaluation tooling.

// NaN-rejecting checks read better as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod demosaic;
pub mod error;
pub mod eval;
pub mod mosaic;
pub mod physics;
pub mod pipeline;
pub mod plane;
pub mod pnm;
pub mod render;
pub mod stokes;
pub mod synth;

pub use error::{Error, Result};
