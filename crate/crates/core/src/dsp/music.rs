use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use super::fft::{azimuth_grid, range_profiles, DEFAULT_AZIMUTH_GRID_POINTS};
use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::types::{MapFormat, PolarMap, RadarCube};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceCount {
    /// Count eigenvalues that stand out from both the strongest eigenvalue
    /// and the noise floor (see [`MusicParams::eigenvalue_ratio_threshold`]).
    Auto,
    Fixed(usize),
}

pub const DEFAULT_SUBARRAY_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusicParams {
    pub num_sources: SourceCount,
    /// Auto mode keeps eigenvalue `l` as signal when `l >= t * l_max` and
    /// `l >= noise / t`, where `noise` is the median of the eigenvalues the
    /// snapshot count can support.
    pub eigenvalue_ratio_threshold: f64,
    pub azimuth_grid_points: usize,
    pub forward_backward: bool,
    /// Diagonal loading relative to `trace / M`.
    pub diagonal_loading: f64,
    /// Spatial smoothing: covariance averaged over all subarrays of this many
    /// consecutive antennas, which decorrelates coherent returns. `None`
    /// uses the full array.
    pub subarray_len: Option<usize>,
}

impl Default for MusicParams {
    fn default() -> Self {
        MusicParams {
            num_sources: SourceCount::Auto,
            eigenvalue_ratio_threshold: 0.01,
            azimuth_grid_points: DEFAULT_AZIMUTH_GRID_POINTS,
            forward_backward: true,
            diagonal_loading: 1e-6,
            subarray_len: Some(DEFAULT_SUBARRAY_LEN),
        }
    }
}

impl MusicParams {
    /// Antennas per covariance row, `subarray_len` or the full array.
    pub fn aperture(&self, config: &RadarConfig) -> usize {
        self.subarray_len.unwrap_or(config.num_antennas)
    }

    fn validate(&self, config: &RadarConfig) -> Result<()> {
        let l = self.aperture(config);
        if l < 2 || l > config.num_antennas {
            return Err(Error::InvalidParam(format!(
                "subarray_len {l} must be in [2, {}]",
                config.num_antennas
            )));
        }
        if self.azimuth_grid_points < 2 {
            return Err(Error::InvalidParam("azimuth_grid_points must be >= 2".into()));
        }
        if let SourceCount::Fixed(k) = self.num_sources {
            if k >= l {
                return Err(Error::InvalidParam(format!(
                    "num_sources {k} must be < aperture {l}"
                )));
            }
        }
        if !(self.diagonal_loading >= 0.0) {
            return Err(Error::InvalidParam("diagonal_loading must be >= 0".into()));
        }
        if !(self.eigenvalue_ratio_threshold > 0.0 && self.eigenvalue_ratio_threshold < 1.0) {
            return Err(Error::InvalidParam("eigenvalue_ratio_threshold must be in (0, 1)".into()));
        }
        if config.num_chirps < 2 && !self.forward_backward {
            return Err(Error::Covariance(
                "need >= 2 chirp snapshots or forward-backward averaging".into(),
            ));
        }
        Ok(())
    }
}

/// Pseudo-spectrum of one covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicSpectrum {
    pub values: Vec<f64>,
    pub num_sources: usize,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

fn steering_matrix(config: &RadarConfig, m: usize, grid: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(m, grid.len(), |k, j| {
        Complex64::from_polar(1.0, 2.0 * PI * config.antenna_spacing * grid[j].sin() * k as f64)
    })
}

/// Sample covariance of snapshot columns over every `m`-antenna subarray,
/// optionally forward-backward averaged, plus diagonal loading.
fn covariance(snapshots: &DMatrix<Complex64>, m: usize, params: &MusicParams) -> DMatrix<Complex64> {
    let subarrays = snapshots.nrows() - m + 1;
    let n = (snapshots.ncols() * subarrays) as f64;
    let mut r = DMatrix::<Complex64>::zeros(m, m);
    for p in 0..subarrays {
        let sub = snapshots.rows(p, m);
        r += &sub * sub.adjoint();
    }
    r /= Complex64::new(n, 0.0);
    if params.forward_backward {
        // J conj(R) J
        let back = DMatrix::from_fn(m, m, |i, j| r[(m - 1 - i, m - 1 - j)].conj());
        r = (r + back) * Complex64::new(0.5, 0.0);
    }
    let trace: f64 = (0..m).map(|i| r[(i, i)].re).sum();
    let load = params.diagonal_loading * trace / m as f64;
    for i in 0..m {
        r[(i, i)] += Complex64::new(load, 0.0);
    }
    r
}

fn count_sources(eig: &[f64], supported_rank: usize, params: &MusicParams) -> usize {
    let m = eig.len();
    let max_k = match params.num_sources {
        SourceCount::Fixed(k) => return k,
        SourceCount::Auto => (supported_rank / 2).min(m - 1),
    };
    let rank = supported_rank.clamp(1, m);
    let mut top: Vec<f64> = eig[..rank].to_vec();
    top.sort_by(f64::total_cmp);
    let noise = top[rank / 2];
    let t = params.eigenvalue_ratio_threshold;
    eig.iter()
        .take(max_k)
        .take_while(|&&l| l >= t * eig[0] && l >= noise / t)
        .count()
}

/// MUSIC pseudo-spectrum `1 / (a^H E_n E_n^H a)` on `grid` for one set of
/// snapshots (columns). The steering rows set the subarray length. The projection onto the noise subspace is evaluated
/// as `|a|^2 - |E_s^H a|^2`, identical for an orthonormal eigenbasis.
pub fn music_spectrum(
    snapshots: &DMatrix<Complex64>,
    steering: &DMatrix<Complex64>,
    params: &MusicParams,
) -> Result<MusicSpectrum> {
    let m = steering.nrows();
    if m < 2 || m > snapshots.nrows() {
        return Err(Error::InvalidParam(format!(
            "steering length {m} vs {} antennas",
            snapshots.nrows()
        )));
    }
    if snapshots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Covariance("non-finite snapshot".into()));
    }
    let r = covariance(snapshots, m, params);
    let eig = SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::Covariance("eigendecomposition produced non-finite values".into()));
    }
    let snaps = snapshots.ncols()
        * (snapshots.nrows() - m + 1)
        * if params.forward_backward { 2 } else { 1 };
    let k = count_sources(&lambdas, snaps.min(m), params);
    let signal: Vec<DVector<Complex64>> =
        order[..k].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let norm_a = m as f64;
    let floor = 1e-12 * norm_a;
    let values = (0..steering.ncols())
        .map(|j| {
            let a = steering.column(j);
            let proj: f64 = signal.iter().map(|e| e.dotc(&a).norm_sqr()).sum();
            1.0 / (norm_a - proj).max(floor)
        })
        .collect();
    Ok(MusicSpectrum {
        values,
        num_sources: k,
        eigenvalues: lambdas,
    })
}

fn bin_row(
    profiles: &Array3<Complex64>,
    bin: usize,
    steering: &DMatrix<Complex64>,
    params: &MusicParams,
) -> Result<Vec<f64>> {
    let (nc, _, na) = profiles.dim();
    let snaps = DMatrix::from_fn(na, nc, |k, c| profiles[(c, bin, k)]);
    let power = snaps.iter().map(|z| z.norm_sqr()).sum::<f64>() / (nc * na) as f64;
    if power == 0.0 {
        return Ok(vec![0.0; steering.ncols()]);
    }
    let spec = music_spectrum(&snaps, steering, params)?;
    let total: f64 = spec.values.iter().sum();
    Ok(spec.values.iter().map(|p| (power * p / total).sqrt()).collect())
}

/// One range bin of [`music_map`], without computing the others.
pub fn music_map_row(cube: &RadarCube, bin: usize, params: &MusicParams) -> Result<Vec<f64>> {
    cube.validate()?;
    let cfg = &cube.config;
    params.validate(cfg)?;
    let profiles = range_profiles(cube);
    if bin >= profiles.dim().1 {
        return Err(Error::InvalidParam(format!("range bin {bin} out of {}", profiles.dim().1)));
    }
    let grid = azimuth_grid(cfg, params.azimuth_grid_points);
    bin_row(&profiles, bin, &steering_matrix(cfg, params.aperture(cfg), &grid), params)
}

/// Range-azimuth MUSIC map (data-music).
///
/// Per range bin: chirp snapshots of the Hann-windowed range FFT form the
/// spatially smoothed antenna covariance. The pseudo-spectrum is not a power estimate; each
/// bin's mean snapshot power is spread over azimuth in proportion to it and
/// the square root is stored, so values are amplitude-like and empty bins
/// stay dark.
pub fn music_map(cube: &RadarCube, params: &MusicParams) -> Result<PolarMap> {
    cube.validate()?;
    let cfg = &cube.config;
    params.validate(cfg)?;
    let profiles: Array3<Complex64> = range_profiles(cube);
    let nbins = profiles.dim().1;
    let grid = azimuth_grid(cfg, params.azimuth_grid_points);
    let steering = steering_matrix(cfg, params.aperture(cfg), &grid);
    let rows: Vec<Vec<f64>> = (0..nbins)
        .into_par_iter()
        .map(|r| bin_row(&profiles, r, &steering, params))
        .collect::<Result<_>>()?;
    let mut values = Array2::<f64>::zeros((nbins, grid.len()));
    for (r, row) in rows.into_iter().enumerate() {
        values.row_mut(r).iter_mut().zip(row).for_each(|(d, v)| *d = v);
    }
    Ok(PolarMap {
        values,
        range_extent: nbins as f64 * cfg.range_resolution,
        azimuth_extent: cfg.max_azimuth,
        format: MapFormat::Music,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise_snaps(m: usize, n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
        DMatrix::from_fn(m, n, |_, _| Complex64::new(d.sample(&mut rng), d.sample(&mut rng)))
    }

    #[test]
    fn pure_noise_is_flat_with_zero_sources() {
        let cfg = RadarConfig::default();
        let grid = azimuth_grid(&cfg, 181);
        let st = steering_matrix(&cfg, 32, &grid);
        for seed in 0..50 {
            let spec = music_spectrum(&noise_snaps(32, 16, seed), &st, &MusicParams::default()).unwrap();
            assert_eq!(spec.num_sources, 0);
            let max = spec.values.iter().cloned().fold(0.0, f64::max);
            let min = spec.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min < 10.0);
        }
    }

    #[test]
    fn spectrum_positive_and_finite() {
        let cfg = RadarConfig::default();
        let grid = azimuth_grid(&cfg, 361);
        let st = steering_matrix(&cfg, 32, &grid);
        let a = st.column(200).into_owned();
        let mut snaps = noise_snaps(32, 16, 1) * Complex64::new(0.01, 0.0);
        for mut col in snaps.column_iter_mut() {
            col += &a;
        }
        let spec = music_spectrum(&snaps, &st, &MusicParams::default()).unwrap();
        assert_eq!(spec.num_sources, 1);
        assert!(spec.values.iter().all(|v| v.is_finite() && *v > 0.0));
        let peak = (0..361).max_by(|&i, &j| spec.values[i].total_cmp(&spec.values[j])).unwrap();
        assert_eq!(peak, 200);
    }

    #[test]
    fn single_chirp_needs_forward_backward() {
        let cfg = RadarConfig {
            num_chirps: 1,
            ..Default::default()
        };
        let cube = RadarCube::zeros(&cfg);
        let p = MusicParams {
            forward_backward: false,
            ..Default::default()
        };
        assert!(matches!(music_map(&cube, &p), Err(Error::Covariance(_))));
    }

    #[test]
    fn fixed_source_count_must_leave_noise_subspace() {
        let cfg = RadarConfig::default();
        let p = MusicParams {
            num_sources: SourceCount::Fixed(32),
            ..Default::default()
        };
        assert!(p.validate(&cfg).is_err());
    }

    #[test]
    fn non_finite_snapshots_rejected() {
        let cfg = RadarConfig::default();
        let st = steering_matrix(&cfg, 32, &azimuth_grid(&cfg, 11));
        let mut s = noise_snaps(32, 4, 0);
        s[(3, 2)] = Complex64::new(f64::NAN, 0.0);
        assert!(music_spectrum(&s, &st, &MusicParams::default()).is_err());
    }

    #[test]
    fn smoothing_resolves_coherent_pair() {
        let cfg = RadarConfig::default();
        let grid = azimuth_grid(&cfg, 361);
        let full = steering_matrix(&cfg, 32, &grid);
        // two fully coherent sources: identical in every snapshot
        let a = full.column(150) + full.column(210) * Complex64::new(0.0, 0.7);
        let mut snaps = noise_snaps(32, 16, 3) * Complex64::new(0.01, 0.0);
        for mut col in snaps.column_iter_mut() {
            col += &a;
        }
        let plain = MusicParams { forward_backward: false, subarray_len: None, ..Default::default() };
        assert_eq!(music_spectrum(&snaps, &full, &plain).unwrap().num_sources, 1);
        let sub = steering_matrix(&cfg, 24, &grid);
        let spec = music_spectrum(&snaps, &sub, &MusicParams::default()).unwrap();
        assert_eq!(spec.num_sources, 2);
        let v = &spec.values;
        for peak in [150, 210] {
            assert!(v[peak] > 100.0 * v[180]);
        }
        assert!(music_spectrum(&snaps, &steering_matrix(&cfg, 33, &grid), &plain).is_err());
    }

    #[test]
    fn subarray_len_validated() {
        let cfg = RadarConfig::default();
        for l in [1, 33] {
            let p = MusicParams { subarray_len: Some(l), ..Default::default() };
            assert!(p.validate(&cfg).is_err());
        }
        let p = MusicParams { subarray_len: Some(24), num_sources: SourceCount::Fixed(24), ..Default::default() };
        assert!(p.validate(&cfg).is_err());
    }

    #[test]
    fn row_matches_map() {
        let cfg = RadarConfig { num_samples: 256, max_range: 19.2, ..Default::default() };
        let sc = [crate::sim::Scatterer::from_xy(10.0, 2.0, 1.0)];
        let cube = crate::sim::simulate_cube(&sc, &cfg, Some(20.0), 4).unwrap();
        let p = MusicParams { azimuth_grid_points: 181, ..Default::default() };
        let map = music_map(&cube, &p).unwrap();
        let row = music_map_row(&cube, 67, &p).unwrap();
        assert_eq!(row, map.values.row(67).to_vec());
        assert!(music_map_row(&cube, 128, &p).is_err());
    }
}
