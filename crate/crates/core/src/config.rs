//! Radar front-end configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FMCW corner-radar configuration.
///
/// The default instance is the 77 GHz, 32-channel corner radar the rest of
/// the crate is calibrated against: 153.60 m maximum range at 0.15 m range
/// resolution, ±90° azimuth coverage at 3.7° native resolution, 50 Hz.
///
/// `num_samples` real-equivalent fast-time samples give `num_samples / 2`
/// range bins, so the default 2048 samples land exactly on the 1024 bins
/// implied by `max_range / range_resolution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Meters.
    pub max_range: f64,
    /// Meters.
    pub range_resolution: f64,
    /// Half-width of the azimuth field of view, radians.
    pub max_azimuth: f64,
    /// Radians.
    pub azimuth_resolution: f64,
    /// Hz.
    pub frame_rate: f64,
    pub num_antennas: usize,
    /// Fast-time samples per chirp.
    pub num_samples: usize,
    /// Chirps per frame (slow time).
    pub num_chirps: usize,
    /// Element spacing of the uniform linear array, in wavelengths.
    pub antenna_spacing: f64,
    /// Meters.
    pub carrier_wavelength: f64,
    /// Per-range-bin noise floor relative to a unit-amplitude scatterer, dB.
    /// Used as `-snr_db` when no SNR is requested explicitly.
    pub noise_floor_db: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig {
            max_range: 153.60,
            range_resolution: 0.15,
            max_azimuth: 90f64.to_radians(),
            azimuth_resolution: 3.7f64.to_radians(),
            frame_rate: 50.0,
            num_antennas: 32,
            num_samples: 2048,
            num_chirps: 16,
            antenna_spacing: 0.5,
            carrier_wavelength: SPEED_OF_LIGHT / 77.0e9,
            noise_floor_db: -20.0,
        }
    }
}

impl RadarConfig {
    /// Number of range bins, `max_range / range_resolution` rounded.
    pub fn num_range_bins(&self) -> usize {
        (self.max_range / self.range_resolution).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.max_range > 0.0 && self.range_resolution > 0.0) {
            return fail(format!(
                "max_range ({}) and range_resolution ({}) must be positive",
                self.max_range, self.range_resolution
            ));
        }
        let ratio = self.max_range / self.range_resolution;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
            return fail(format!(
                "max_range / range_resolution = {ratio} is not an integer >= 1"
            ));
        }
        if self.num_antennas < 2 {
            return fail(format!("num_antennas = {} < 2", self.num_antennas));
        }
        if !(self.antenna_spacing > 0.0 && self.antenna_spacing <= 0.5) {
            return fail(format!(
                "antenna_spacing = {} outside (0, 0.5] wavelengths",
                self.antenna_spacing
            ));
        }
        if !(self.max_azimuth > 0.0 && self.max_azimuth <= std::f64::consts::FRAC_PI_2) {
            return fail(format!("max_azimuth = {} outside (0, pi/2]", self.max_azimuth));
        }
        if self.num_chirps < 1 {
            return fail("num_chirps must be >= 1".into());
        }
        if self.num_samples < 2 || self.num_samples / 2 != self.num_range_bins() {
            return fail(format!(
                "num_samples / 2 = {} must equal the number of range bins {}",
                self.num_samples / 2,
                self.num_range_bins()
            ));
        }
        if !(self.azimuth_resolution > 0.0 && self.frame_rate > 0.0 && self.carrier_wavelength > 0.0)
        {
            return fail("azimuth_resolution, frame_rate and carrier_wavelength must be positive".into());
        }
        if !self.noise_floor_db.is_finite() {
            return fail("noise_floor_db must be finite".into());
        }
        Ok(())
    }
}
