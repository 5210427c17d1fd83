//! Radar DSP: the four data formats and classical detection.
//!
//! All map producers are pure functions of the cube. Range bins are
//! processed in parallel.

mod cfar;
mod detect;
mod fft;
mod music;
mod polar;

pub use cfar::{ca_cfar, ca_cfar_detect, ca_cfar_masked, cfar_alpha, CfarDetection, CfarParams};
pub use detect::{baseline_detect_boxes, baseline_detect_polar, BaselineParams, RectFit};
pub use fft::{
    azimuth_grid, hann, range_azimuth_fft, range_profiles, windowed_fft, FftParams,
    DEFAULT_AZIMUTH_GRID_POINTS,
};
pub use music::{music_map, music_map_row, music_spectrum, MusicParams, DEFAULT_SUBARRAY_LEN, MusicSpectrum, SourceCount};
pub use polar::{polar_to_cartesian, BevParams};
