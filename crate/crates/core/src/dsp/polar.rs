use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{BevImage, PolarMap};

/// Cartesian output grid. Defaults span 40 m forward, left and right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevParams {
    pub meters_per_pixel: f64,
    pub extent_forward: f64,
    pub extent_left: f64,
    pub extent_right: f64,
}

impl Default for BevParams {
    fn default() -> Self {
        BevParams {
            meters_per_pixel: 0.1,
            extent_forward: 40.0,
            extent_left: 40.0,
            extent_right: 40.0,
        }
    }
}

/// Bilinear resampling of a polar map onto a BEV grid. Pixels outside the
/// polar field of view (beyond the range extent or the azimuth extent) are 0.
pub fn polar_to_cartesian(map: &PolarMap, params: &BevParams) -> Result<BevImage> {
    let mpp = params.meters_per_pixel;
    if !(mpp > 0.0 && mpp.is_finite()) {
        return Err(Error::InvalidParam(format!("meters_per_pixel must be > 0, got {mpp}")));
    }
    let extents = [params.extent_forward, params.extent_left, params.extent_right];
    if extents.iter().any(|e| !(*e >= 0.0) || *e > map.range_extent) {
        return Err(Error::InvalidParam(format!(
            "BEV extents {extents:?} must lie within the map range extent {}",
            map.range_extent
        )));
    }
    let rows = (params.extent_forward / mpp).round() as usize;
    let cols = ((params.extent_left + params.extent_right) / mpp).round() as usize;
    let mut bev = BevImage {
        values: Array2::zeros((rows, cols)),
        meters_per_pixel: mpp,
        extent_forward: params.extent_forward,
        extent_left: params.extent_left,
        extent_right: params.extent_right,
    };
    let nr = map.num_range_bins();
    let na = map.num_azimuth_bins();
    let rbin = map.range_bin_size();
    let astep = map.azimuth_step();
    let sample = |x: f64, y: f64| -> f64 {
        let r = x.hypot(y);
        let t = y.atan2(x);
        if r > map.range_extent || t.abs() > map.azimuth_extent {
            return 0.0;
        }
        let fr = (r / rbin).min((nr - 1) as f64);
        let fa = ((t + map.azimuth_extent) / astep).clamp(0.0, (na - 1) as f64);
        let (r0, a0) = (fr.floor() as usize, fa.floor() as usize);
        let (r1, a1) = ((r0 + 1).min(nr - 1), (a0 + 1).min(na - 1));
        let (wr, wa) = (fr - r0 as f64, fa - a0 as f64);
        let v = &map.values;
        (1.0 - wr) * ((1.0 - wa) * v[(r0, a0)] + wa * v[(r0, a1)])
            + wr * ((1.0 - wa) * v[(r1, a0)] + wa * v[(r1, a1)])
    };
    let filled: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|i| {
            (0..cols)
                .map(|j| {
                    let (x, y) = bev.pixel_center(i, j);
                    sample(x, y)
                })
                .collect()
        })
        .collect();
    for (i, row) in filled.into_iter().enumerate() {
        bev.values.row_mut(i).iter_mut().zip(row).for_each(|(d, v)| *d = v);
    }
    Ok(bev)
}
