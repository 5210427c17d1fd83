//! Radar oriented-object-detection pipeline without the learned backbone.
//!
//! - [`sim`] turns box scenes into raw FMCW cubes.
//! - [`dsp`] produces the four radar data formats (polar/Cartesian × FFT/MUSIC)
//!   and a CA-CFAR baseline detector.
//! - [`formats`] registers the data formats by name for runtime selection.
//! - [`geometry`] holds exact oriented IoU, NMS and soft-NMS.
//! - [`detmath`] holds anchors, box encoding and the probabilistic loss stack.
//! - [`autolabel`] holds the TTA group, detection-set fusion and the
//!   response-strength filter.
//! - [`eval`] computes oriented-IoU average precision.
//! - [`pipeline`] wires everything into the synthetic benchmark.

pub mod autolabel;
pub mod config;
pub mod detmath;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod sim;
pub mod types;

pub use config::RadarConfig;
pub use error::{Error, Result};
pub use types::{
    angle_diff, normalize_angle, BevImage, BoxSet, DetectionSet, GroundTruthSet, MapFormat,
    OrientedBox, PolarMap, RadarCube,
};
