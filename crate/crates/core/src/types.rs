//! Shared domain types: radar cubes, polar maps, BEV images and oriented boxes.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::error::{Error, Result};

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2*pi after rounding
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Smallest signed difference `a - b` on the circle, in `[-pi, pi)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Raw complex samples indexed `(chirp, antenna, sample)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    pub data: Array3<Complex32>,
    pub config: RadarConfig,
}

impl RadarCube {
    pub fn zeros(config: &RadarConfig) -> Self {
        RadarCube {
            data: Array3::zeros((config.num_chirps, config.num_antennas, config.num_samples)),
            config: config.clone(),
        }
    }

    pub fn new(data: Array3<Complex32>, config: RadarConfig) -> Result<Self> {
        let cube = RadarCube { data, config };
        cube.validate()?;
        Ok(cube)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        let expected = (c.num_chirps, c.num_antennas, c.num_samples);
        if self.data.dim() != expected {
            return Err(Error::ShapeMismatch(format!(
                "cube has shape {:?}, config expects {:?}",
                self.data.dim(),
                expected
            )));
        }
        if self.data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParam("cube contains non-finite samples".into()));
        }
        Ok(())
    }
}

/// Which azimuth processing produced a polar map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Fft,
    Music,
}

/// Range × azimuth intensity map in polar coordinates.
///
/// Range bin `k` is centred at `k * range_bin_size()`. Azimuth bins are a
/// uniform angle grid from `-azimuth_extent` to `+azimuth_extent`, both
/// inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarMap {
    pub values: Array2<f64>,
    pub range_extent: f64,
    pub azimuth_extent: f64,
    pub format: MapFormat,
}

impl PolarMap {
    pub fn num_range_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_azimuth_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn range_bin_size(&self) -> f64 {
        self.range_extent / self.num_range_bins() as f64
    }

    pub fn azimuth_step(&self) -> f64 {
        2.0 * self.azimuth_extent / (self.num_azimuth_bins().max(2) - 1) as f64
    }

    pub fn range_of(&self, bin: usize) -> f64 {
        bin as f64 * self.range_bin_size()
    }

    pub fn azimuth_of(&self, bin: usize) -> f64 {
        -self.azimuth_extent + bin as f64 * self.azimuth_step()
    }

    /// Nearest azimuth bin for an angle, clamped to the grid.
    pub fn azimuth_bin(&self, azimuth: f64) -> usize {
        let f = (azimuth + self.azimuth_extent) / self.azimuth_step();
        (f.round().max(0.0) as usize).min(self.num_azimuth_bins() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.nrows() < 1 || self.values.ncols() < 1 {
            return Err(Error::Empty("polar map has no bins".into()));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParam(
                "polar map values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Cartesian bird's-eye-view grid around the sensor.
///
/// Sensor frame: x forward, y left. Row 0 is the far forward edge, column 0
/// the far left edge; pixel `(i, j)` is centred at
/// `x = extent_forward - (i + 0.5) * mpp`, `y = extent_left - (j + 0.5) * mpp`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevImage {
    pub values: Array2<f64>,
    pub meters_per_pixel: f64,
    pub extent_forward: f64,
    pub extent_left: f64,
    pub extent_right: f64,
}

impl BevImage {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Sensor position in fractional grid coordinates `(row, col)`.
    pub fn origin(&self) -> (f64, f64) {
        (
            self.extent_forward / self.meters_per_pixel,
            self.extent_left / self.meters_per_pixel,
        )
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let mpp = self.meters_per_pixel;
        (
            self.extent_forward - (row as f64 + 0.5) * mpp,
            self.extent_left - (col as f64 + 0.5) * mpp,
        )
    }

    /// Fractional `(row, col)` of a metric point; pixel centres sit on `.5`.
    pub fn point_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let mpp = self.meters_per_pixel;
        ((self.extent_forward - x) / mpp, (self.extent_left - y) / mpp)
    }

    /// Values of the pixels whose centres lie inside `b` (edges inclusive).
    pub fn values_in_box(&self, b: &OrientedBox) -> Vec<f64> {
        let (s, c) = b.theta.sin_cos();
        let (hu, hv) = (0.5 * b.h, 0.5 * b.w);
        let rx = hu * c.abs() + hv * s.abs();
        let ry = hu * s.abs() + hv * c.abs();
        let (r0, c0) = self.point_to_pixel(b.cx + rx, b.cy + ry);
        let (r1, c1) = self.point_to_pixel(b.cx - rx, b.cy - ry);
        let clamp = |v: f64, n: usize| v.floor().clamp(0.0, n as f64) as usize;
        let (ra, rb) = (clamp(r0, self.rows()), clamp(r1 + 1.0, self.rows()));
        let (ca, cb) = (clamp(c0, self.cols()), clamp(c1 + 1.0, self.cols()));
        let mut out = Vec::new();
        for i in ra..rb {
            for j in ca..cb {
                let (x, y) = self.pixel_center(i, j);
                let (dx, dy) = (x - b.cx, y - b.cy);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                if u.abs() <= hu && v.abs() <= hv {
                    out.push(self.values[[i, j]]);
                }
            }
        }
        out
    }
}

/// Oriented bounding box in the BEV sensor frame.
///
/// `h` is the extent along the heading `theta` (CCW from +x), `w` across it.
/// `variances` follow the encoding order `(x_o, y_o, w_o, h_o, cos, sin)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<[f64; 6]>,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        OrientedBox {
            cx,
            cy,
            w,
            h,
            theta: normalize_angle(theta),
            score: None,
            variances: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn score_or_zero(&self) -> f64 {
        self.score.unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.h > 0.0) || !self.w.is_finite() || !self.h.is_finite() {
            return Err(Error::DegenerateBox {
                w: self.w,
                h: self.h,
            });
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && self.theta.is_finite()) {
            return Err(Error::InvalidParam("box has non-finite fields".into()));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidParam(format!("score {s} outside [0, 1]")));
            }
        }
        if let Some(v) = self.variances {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidParam("variances must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Boxes belonging to one frame. Used both for detections and ground truth.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxSet {
    pub frame_id: u64,
    pub boxes: Vec<OrientedBox>,
}

pub type DetectionSet = BoxSet;
pub type GroundTruthSet = BoxSet;

impl BoxSet {
    pub fn new(frame_id: u64, boxes: Vec<OrientedBox>) -> Self {
        BoxSet { frame_id, boxes }
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    /// Ground-truth boxes must be valid and carry no score.
    pub fn validate_ground_truth(&self) -> Result<()> {
        for b in &self.boxes {
            b.validate()?;
            if b.score.is_some() {
                return Err(Error::InvalidParam(format!(
                    "ground-truth box in frame {} carries a score",
                    self.frame_id
                )));
            }
        }
        Ok(())
    }
}
