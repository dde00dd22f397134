//! Defocus blur simulation and single-image depth from defocus.
//!
//! The crate covers the full loop: a thin-lens model relating depth to blur
//! ([`optics`]), disk and Gaussian PSFs ([`psf`]), layered occlusion-aware
//! rendering of RGB-D pairs ([`render`]), an edge-based depth estimator
//! ([`sidfd`]), depth metrics ([`eval`]), aggregation of stochastic
//! predictions ([`uncertainty`]) and RGB-D dataset tooling ([`dataset`]).

pub mod error;
pub mod inpaint;
pub mod numeric;
pub mod optics;
pub mod psf;
pub mod raster;
pub mod render;
pub mod sidfd;
pub mod eval;
pub mod uncertainty;
pub mod dataset;

pub use error::{Error, Result};
pub use optics::{BlurCurve, BlurSolutions, CameraConfig, CameraParams, FarDepth};
pub use psf::{Kernel, KernelKind};
pub use raster::{DepthMap, Image, Mask};

/// Version string recorded in sidecars and reports.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
