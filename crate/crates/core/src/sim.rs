//! Synthetic raw-cube generation from box scenes.
//!
//! Far-field point scatterers on a uniform linear array. After dechirping,
//! a scatterer at range `r` is a complex tone of `r / range_resolution`
//! cycles over the fast-time window, so its range-FFT peak sits on bin
//! `round(r / range_resolution)`. There is no Doppler: chirps differ only in
//! their noise.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::geometry::box_to_polygon;
use crate::types::{OrientedBox, RadarCube};

/// Amplitude of boundary points facing away from the sensor, relative to a
/// point seen head-on.
pub const BACKFACE_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Meters.
    pub range: f64,
    /// Radians, CCW from boresight (+x).
    pub azimuth: f64,
    pub rcs_amplitude: f64,
}

impl Scatterer {
    pub fn from_xy(x: f64, y: f64, rcs_amplitude: f64) -> Self {
        Scatterer {
            range: x.hypot(y),
            azimuth: y.atan2(x),
            rcs_amplitude,
        }
    }
}

fn default_per_edge() -> usize {
    12
}

/// One frame of vehicles plus free clutter scatterers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default)]
    pub frame_id: u64,
    #[serde(default)]
    pub boxes: Vec<OrientedBox>,
    #[serde(default)]
    pub clutter: Vec<Scatterer>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_per_edge")]
    pub scatterers_per_box_edge: usize,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            frame_id: 0,
            boxes: Vec::new(),
            clutter: Vec::new(),
            seed: 0,
            scatterers_per_box_edge: default_per_edge(),
        }
    }
}

fn check_scatterer(index: usize, s: &Scatterer, config: &RadarConfig) -> Result<()> {
    let ok = s.range > 0.0
        && s.range <= config.max_range
        && s.azimuth.abs() <= config.max_azimuth
        && s.rcs_amplitude >= 0.0
        && s.rcs_amplitude.is_finite();
    if ok {
        Ok(())
    } else {
        Err(Error::ScattererOutOfBounds {
            index,
            range: s.range,
            azimuth: s.azimuth,
        })
    }
}

/// Samples every box boundary with `scatterers_per_box_edge` jittered points
/// per edge and appends the scene clutter unchanged.
///
/// Point amplitude is cosine-weighted by how squarely the edge faces the
/// sensor, floored at [`BACKFACE_AMPLITUDE`], so the sensor-facing edges
/// dominate the response.
pub fn scene_to_scatterers(scene: &Scene, config: &RadarConfig) -> Result<Vec<Scatterer>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let n = scene.scatterers_per_box_edge;
    let mut out = Vec::with_capacity(scene.boxes.len() * 4 * n + scene.clutter.len());
    for (index, b) in scene.boxes.iter().enumerate() {
        b.validate().map_err(|e| Error::BoxOutOfView {
            index,
            reason: e.to_string(),
        })?;
        let poly = box_to_polygon(b);
        let v = poly.vertices();
        for (ci, c) in v.iter().enumerate() {
            let s = Scatterer::from_xy(c[0], c[1], 1.0);
            if check_scatterer(ci, &s, config).is_err() {
                return Err(Error::BoxOutOfView {
                    index,
                    reason: format!(
                        "corner ({:.3}, {:.3}) at range {:.3} m, azimuth {:.2} deg",
                        c[0],
                        c[1],
                        s.range,
                        s.azimuth.to_degrees()
                    ),
                });
            }
        }
        for e in 0..4 {
            let a = v[e];
            let bpt = v[(e + 1) % 4];
            let (dx, dy) = (bpt[0] - a[0], bpt[1] - a[1]);
            let len = dx.hypot(dy);
            // outward normal of a CCW edge
            let normal = [dy / len, -dx / len];
            for j in 0..n {
                let t = (j as f64 + rng.random::<f64>()) / n as f64;
                let (x, y) = (a[0] + t * dx, a[1] + t * dy);
                let r = x.hypot(y);
                let facing = (-(normal[0] * x + normal[1] * y) / r).max(0.0);
                let amp = BACKFACE_AMPLITUDE + (1.0 - BACKFACE_AMPLITUDE) * facing;
                out.push(Scatterer::from_xy(x, y, amp));
            }
        }
    }
    for (i, c) in scene.clutter.iter().enumerate() {
        check_scatterer(i, c, config)?;
        out.push(*c);
    }
    Ok(out)
}

/// Complex noise variance per sample for a requested per-range-bin SNR:
/// a unit-amplitude tone on a bin centre has bin power `N^2`, white noise
/// of variance `v` has bin power `N v`, hence `v = N / 10^(snr/10)`.
pub fn noise_variance(config: &RadarConfig, snr_db: f64) -> f64 {
    config.num_samples as f64 / 10f64.powf(snr_db / 10.0)
}

/// Noise-free antenna × sample plane of the summed scatterer returns.
pub fn signal_plane(scatterers: &[Scatterer], config: &RadarConfig) -> Result<Array2<Complex64>> {
    let ns = config.num_samples;
    let na = config.num_antennas;
    let mut plane = Array2::<Complex64>::zeros((na, ns));
    let mut range_tone = vec![Complex64::new(0.0, 0.0); ns];
    for (i, s) in scatterers.iter().enumerate() {
        check_scatterer(i, s, config)?;
        if s.rcs_amplitude == 0.0 {
            continue;
        }
        let cycles = s.range / config.range_resolution;
        for (n, z) in range_tone.iter_mut().enumerate() {
            // reduce phase before scaling to keep precision on long windows
            let phase = ((cycles * n as f64) % ns as f64) / ns as f64;
            *z = Complex64::from_polar(s.rcs_amplitude, 2.0 * PI * phase);
        }
        let u = config.antenna_spacing * s.azimuth.sin();
        for (k, mut row) in plane.rows_mut().into_iter().enumerate() {
            let steer = Complex64::from_polar(1.0, 2.0 * PI * u * k as f64);
            for (dst, z) in row.iter_mut().zip(&range_tone) {
                *dst += steer * z;
            }
        }
    }
    Ok(plane)
}

/// Simulates one frame. `snr_db = None` disables noise; otherwise circular
/// white noise at the per-range-bin SNR of a unit-amplitude scatterer is
/// added, drawn independently per chirp from `seed`.
pub fn simulate_cube(
    scatterers: &[Scatterer],
    config: &RadarConfig,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<RadarCube> {
    config.validate()?;
    let plane = signal_plane(scatterers, config)?;
    let mut cube = RadarCube::zeros(config);
    let noise = match snr_db {
        Some(snr) if snr.is_finite() => {
            let sd = (noise_variance(config, snr) / 2.0).sqrt();
            Some(Normal::new(0.0, sd).map_err(|e| Error::InvalidParam(e.to_string()))?)
        }
        Some(snr) if snr == f64::INFINITY => None,
        Some(snr) => return Err(Error::InvalidParam(format!("snr_db = {snr}"))),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for mut chirp in cube.data.outer_iter_mut() {
        for (dst, s) in chirp.iter_mut().zip(plane.iter()) {
            let mut z = *s;
            if let Some(dist) = &noise {
                z += Complex64::new(dist.sample(&mut rng), dist.sample(&mut rng));
            }
            *dst = Complex32::new(z.re as f32, z.im as f32);
        }
    }
    Ok(cube)
}

/// Convenience: scene → scatterers → cube, noise seeded from the scene seed.
pub fn simulate_scene(scene: &Scene, config: &RadarConfig, snr_db: Option<f64>) -> Result<RadarCube> {
    let scatterers = scene_to_scatterers(scene, config)?;
    simulate_cube(&scatterers, config, snr_db, scene.seed.wrapping_add(0x9E37_79B9_7F4A_7C15))
}
