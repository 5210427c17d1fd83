use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::PolarMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarParams {
    /// Training cells per side.
    pub train_cells: usize,
    /// Guard cells per side.
    pub guard_cells: usize,
    /// Design false-alarm probability.
    pub pfa: f64,
    /// Lower bound on the noise estimate; keeps near-empty backgrounds from
    /// producing zero thresholds.
    pub min_noise: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        CfarParams {
            train_cells: 8,
            guard_cells: 2,
            pfa: 1e-3,
            min_noise: 0.0,
        }
    }
}

impl CfarParams {
    pub fn half_window(&self) -> usize {
        self.train_cells + self.guard_cells
    }

    /// Training cells in the square ring around the cell under test.
    pub fn num_training(&self) -> usize {
        let outer = 2 * self.half_window() + 1;
        let inner = 2 * self.guard_cells + 1;
        outer * outer - inner * inner
    }

    fn validate(&self) -> Result<()> {
        if self.train_cells < 1 {
            return Err(Error::InvalidParam("train_cells must be >= 1".into()));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::InvalidParam(format!("pfa {} outside (0, 1)", self.pfa)));
        }
        if !(self.min_noise >= 0.0) {
            return Err(Error::InvalidParam("min_noise must be >= 0".into()));
        }
        Ok(())
    }
}

/// CA-CFAR scale for `n` training cells of exponential (square-law) noise:
/// `alpha = n (pfa^(-1/n) - 1)`.
pub fn cfar_alpha(n: usize, pfa: f64) -> f64 {
    let n = n as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarDetection {
    pub row: usize,
    pub col: usize,
    /// Cell power over the noise estimate.
    pub snr_estimate: f64,
}

fn integral(values: ArrayView2<f64>) -> Array2<f64> {
    let (r, c) = values.dim();
    let mut s = Array2::<f64>::zeros((r + 1, c + 1));
    for i in 0..r {
        let mut row = 0.0;
        for j in 0..c {
            row += values[(i, j)];
            s[(i + 1, j + 1)] = s[(i, j + 1)] + row;
        }
    }
    s
}

fn box_sum(s: &Array2<f64>, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
    // inclusive-exclusive [r0, r1) x [c0, c1)
    s[(r1, c1)] - s[(r0, c1)] - s[(r1, c0)] + s[(r0, c0)]
}

/// 2-D cell-averaging CFAR over power values. Cells closer than the window
/// half-width to the border are skipped.
pub fn ca_cfar(power: ArrayView2<f64>, params: &CfarParams) -> Result<Vec<CfarDetection>> {
    cfar_impl(power, None, params)
}

/// [`ca_cfar`] where only cells with `valid` set are tested or averaged.
/// A cell whose ring holds fewer than half the nominal training cells is
/// skipped; otherwise `alpha` follows the actual valid count.
pub fn ca_cfar_masked(
    power: ArrayView2<f64>,
    valid: ArrayView2<bool>,
    params: &CfarParams,
) -> Result<Vec<CfarDetection>> {
    if valid.dim() != power.dim() {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs map {:?}",
            valid.dim(),
            power.dim()
        )));
    }
    cfar_impl(power, Some(valid), params)
}

fn cfar_impl(
    power: ArrayView2<f64>,
    valid: Option<ArrayView2<bool>>,
    params: &CfarParams,
) -> Result<Vec<CfarDetection>> {
    params.validate()?;
    let (rows, cols) = power.dim();
    let hw = params.half_window();
    if rows < 2 * hw + 1 || cols < 2 * hw + 1 {
        return Err(Error::InvalidParam(format!(
            "CFAR window {}x{} larger than map {rows}x{cols}",
            2 * hw + 1,
            2 * hw + 1
        )));
    }
    let n = params.num_training();
    let alpha = cfar_alpha(n, params.pfa);
    let g = params.guard_cells;
    let (s, counts) = match valid {
        None => (integral(power), None),
        Some(m) => {
            let masked = Array2::from_shape_fn(power.dim(), |ij| if m[ij] { power[ij] } else { 0.0 });
            (integral(masked.view()), Some(integral(m.mapv(|b| b as u8 as f64).view())))
        }
    };
    let mut out = Vec::new();
    for i in hw..rows - hw {
        for j in hw..cols - hw {
            let outer = box_sum(&s, i - hw, j - hw, i + hw + 1, j + hw + 1);
            let inner = box_sum(&s, i - g, j - g, i + g + 1, j + g + 1);
            let (count, a) = match (&counts, valid) {
                (Some(c), Some(m)) => {
                    if !m[(i, j)] {
                        continue;
                    }
                    let k = box_sum(c, i - hw, j - hw, i + hw + 1, j + hw + 1)
                        - box_sum(c, i - g, j - g, i + g + 1, j + g + 1);
                    let k = k.round() as usize;
                    if 2 * k < n {
                        continue;
                    }
                    (k, cfar_alpha(k, params.pfa))
                }
                _ => (n, alpha),
            };
            let noise = ((outer - inner) / count as f64).max(params.min_noise);
            let v = power[(i, j)];
            if v > a * noise {
                out.push(CfarDetection {
                    row: i,
                    col: j,
                    snr_estimate: if noise > 0.0 { v / noise } else { f64::INFINITY },
                });
            }
        }
    }
    Ok(out)
}

/// CA-CFAR on a magnitude map; magnitudes are squared first.
pub fn ca_cfar_detect(map: &PolarMap, params: &CfarParams) -> Result<Vec<CfarDetection>> {
    let power = map.values.mapv(|v| v * v);
    ca_cfar(power.view(), params)
}
