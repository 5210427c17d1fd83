use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::config::RadarConfig;
use crate::error::Result;
use crate::types::{MapFormat, PolarMap, RadarCube};

/// 0.25° spacing over ±90°.
pub const DEFAULT_AZIMUTH_GRID_POINTS: usize = 721;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Unnormalized DFT of `x` weighted by `window`.
pub fn windowed_fft(x: &[Complex64], window: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().zip(window).map(|(z, w)| z * w).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Uniform angle grid over `[-max_azimuth, max_azimuth]`, endpoints included.
pub fn azimuth_grid(config: &RadarConfig, points: usize) -> Vec<f64> {
    let step = 2.0 * config.max_azimuth / (points.max(2) - 1) as f64;
    (0..points)
        .map(|j| -config.max_azimuth + j as f64 * step)
        .collect()
}

/// Hann-windowed range FFT of every (chirp, antenna) row, keeping the first
/// `num_samples / 2` bins. Scaled by the window sum so a unit tone on a bin
/// centre has magnitude 1. Output is indexed `(chirp, range_bin, antenna)`.
pub fn range_profiles(cube: &RadarCube) -> Array3<Complex64> {
    let (nc, na, ns) = cube.data.dim();
    let nbins = ns / 2;
    let window = hann(ns);
    let gain: f64 = window.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(ns);
    let planes: Vec<Array2<Complex64>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let mut dst = Array2::<Complex64>::zeros((nbins, na));
            let mut buf = vec![Complex64::new(0.0, 0.0); ns];
            for k in 0..na {
                let row = cube.data.slice(ndarray::s![c, k, ..]);
                for ((b, z), w) in buf.iter_mut().zip(row.iter()).zip(&window) {
                    *b = Complex64::new(z.re as f64 * w, z.im as f64 * w);
                }
                fft.process(&mut buf);
                for r in 0..nbins {
                    dst[(r, k)] = buf[r] / gain;
                }
            }
            dst
        })
        .collect();
    let mut out = Array3::<Complex64>::zeros((nc, nbins, na));
    for (c, p) in planes.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), c).assign(&p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FftParams {
    pub azimuth_grid_points: usize,
    /// Zero-padded azimuth FFT length.
    pub azimuth_fft_size: usize,
}

impl Default for FftParams {
    fn default() -> Self {
        FftParams {
            azimuth_grid_points: DEFAULT_AZIMUTH_GRID_POINTS,
            azimuth_fft_size: 1024,
        }
    }
}

/// Range-azimuth magnitude map (data-fft).
///
/// Azimuth spectra live in `u = d sin(theta)` space; each output angle reads
/// the zero-padded spectrum at `u * nfft` by linear interpolation.
/// Magnitudes are averaged over chirps.
pub fn range_azimuth_fft(cube: &RadarCube, params: &FftParams) -> Result<PolarMap> {
    cube.validate()?;
    let cfg = &cube.config;
    let profiles = range_profiles(cube);
    let (nc, nbins, na) = profiles.dim();
    let nfft = params.azimuth_fft_size.max(na);
    let window = hann(na);
    let gain: f64 = window.iter().sum();
    let grid = azimuth_grid(cfg, params.azimuth_grid_points);
    // fractional spectrum index per output angle
    let taps: Vec<(usize, usize, f64)> = grid
        .iter()
        .map(|&t| {
            let f = (cfg.antenna_spacing * t.sin() * nfft as f64).rem_euclid(nfft as f64);
            let i0 = f.floor() as usize % nfft;
            (i0, (i0 + 1) % nfft, f - f.floor())
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let rows: Vec<Vec<f64>> = (0..nbins)
        .into_par_iter()
        .map(|r| {
            let mut acc = vec![0.0; grid.len()];
            let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
            for c in 0..nc {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for k in 0..na {
                    buf[k] = profiles[(c, r, k)] * window[k];
                }
                fft.process(&mut buf);
                for (a, &(i0, i1, t)) in acc.iter_mut().zip(&taps) {
                    *a += (1.0 - t) * buf[i0].norm() + t * buf[i1].norm();
                }
            }
            acc.iter().map(|a| a / (nc as f64 * gain)).collect()
        })
        .collect();
    let mut values = Array2::<f64>::zeros((nbins, grid.len()));
    for (r, row) in rows.into_iter().enumerate() {
        values.row_mut(r).iter_mut().zip(row).for_each(|(d, v)| *d = v);
    }
    Ok(PolarMap {
        values,
        range_extent: nbins as f64 * cfg.range_resolution,
        azimuth_extent: cfg.max_azimuth,
        format: MapFormat::Fft,
    })
}
