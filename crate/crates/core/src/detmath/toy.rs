//! A linear detection head trained by plain gradient descent on synthetic
//! pooled BEV features. Exercises the loss stack end to end.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::anchors::{build_anchor_grid, Anchor, AnchorConfig};
use super::encoding::BoxEncoding;
use super::loss::{encode_targets, loss_from_targets, LossParams, PRED_WIDTH};
use crate::error::{Error, Result};
use crate::types::{BevImage, OrientedBox};

/// Features per anchor: bias, mean intensity in the anchor footprint, mean
/// intensity over the anchor's grid cell.
pub const NUM_FEATURES: usize = 3;

pub const DEFAULT_STEPS: usize = 2000;
pub const DEFAULT_LR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub frames: usize,
    pub grid: usize,
    pub cell_size: f64,
    pub max_boxes: usize,
    pub meters_per_pixel: f64,
    pub image_noise: f64,
    /// Label noise std on every encoded parameter.
    pub label_noise: f64,
    /// Parameter index (0 = x_o .. 3 = h_o) that receives extra label noise.
    pub noisy_param: Option<usize>,
    pub noisy_std: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            frames: 16,
            grid: 6,
            cell_size: 4.0,
            max_boxes: 3,
            meters_per_pixel: 0.25,
            image_noise: 0.05,
            label_noise: 0.05,
            noisy_param: Some(0),
            noisy_std: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyFrame {
    pub image: BevImage,
    /// (anchors × NUM_FEATURES)
    pub features: Array2<f64>,
    pub gts: Vec<OrientedBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub anchors: Vec<Anchor>,
    pub frames: Vec<ToyFrame>,
    pub config: ToyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub total: f64,
    pub obj: f64,
    pub loc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyFit {
    /// (PRED_WIDTH × NUM_FEATURES)
    pub weights: Array2<f64>,
    pub trace: Vec<TracePoint>,
}

fn render(gts: &[OrientedBox], cfg: &ToyConfig, rng: &mut ChaCha8Rng) -> BevImage {
    let extent = cfg.grid as f64 * cfg.cell_size;
    let n = (extent / cfg.meters_per_pixel).round() as usize;
    let noise = Normal::new(0.0, cfg.image_noise.max(0.0)).expect("finite std");
    let mut image = BevImage {
        values: Array2::zeros((n, n)),
        meters_per_pixel: cfg.meters_per_pixel,
        extent_forward: extent,
        extent_left: extent,
        extent_right: 0.0,
    };
    let band = cfg.meters_per_pixel;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = image.pixel_center(i, j);
            let mut v: f64 = noise.sample(rng);
            for g in gts {
                // bright outline, dim interior
                let (s, c) = g.theta.sin_cos();
                let (dx, dy) = (x - g.cx, y - g.cy);
                let u = (dx * c + dy * s).abs() - 0.5 * g.h;
                let w = (-dx * s + dy * c).abs() - 0.5 * g.w;
                let outside = u.max(w);
                if outside.abs() <= band {
                    v += 1.0;
                } else if outside < 0.0 {
                    v += 0.2;
                }
            }
            image.values[[i, j]] = v;
        }
    }
    image
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn features(image: &BevImage, anchors: &[Anchor], cell: f64) -> Array2<f64> {
    let mut f = Array2::zeros((anchors.len(), NUM_FEATURES));
    for (k, a) in anchors.iter().enumerate() {
        let cell_box = OrientedBox::new(a.cx, a.cy, cell, cell, 0.0);
        f[[k, 0]] = 1.0;
        f[[k, 1]] = mean(&image.values_in_box(&a.as_box()));
        f[[k, 2]] = mean(&image.values_in_box(&cell_box));
    }
    f
}

/// Seeded frames with 1..=max_boxes vehicles, each near a random anchor.
pub fn make_toy_dataset(config: &ToyConfig) -> Result<ToyDataset> {
    if config.frames == 0 || config.grid == 0 || config.max_boxes == 0 {
        return Err(Error::InvalidConfig("toy dataset needs frames, grid and boxes".into()));
    }
    if config.noisy_param.is_some_and(|p| p > 3) {
        return Err(Error::InvalidConfig("noisy_param must be in 0..=3".into()));
    }
    if !(config.label_noise >= 0.0 && config.noisy_std >= 0.0 && config.image_noise >= 0.0) {
        return Err(Error::InvalidConfig("noise levels must be non-negative".into()));
    }
    let anchor_cfg = AnchorConfig {
        grid_shape: (config.grid, config.grid),
        cell_size: config.cell_size,
        ..Default::default()
    };
    let anchors = build_anchor_grid(&anchor_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cells = config.grid * config.grid;
    let label = Normal::new(0.0, config.label_noise).expect("finite std");
    let extra = Normal::new(0.0, config.noisy_std).expect("finite std");
    let mut frames = Vec::with_capacity(config.frames);
    for _ in 0..config.frames {
        let count = rng.random_range(1..=config.max_boxes.min(cells));
        let mut used = Vec::with_capacity(count);
        while used.len() < count {
            let c = rng.random_range(0..cells);
            if !used.contains(&c) {
                used.push(c);
            }
        }
        let mut gts = Vec::with_capacity(count);
        for c in used {
            let a = anchors[c * 3 + rng.random_range(0..3)];
            let mut e = [0.0; 4];
            for (j, x) in e.iter_mut().enumerate() {
                *x = label.sample(&mut rng);
                if config.noisy_param == Some(j) {
                    *x += extra.sample(&mut rng);
                }
            }
            let dtheta = label.sample(&mut rng);
            gts.push(OrientedBox::new(
                a.cx + e[0] * a.w,
                a.cy + e[1] * a.h,
                a.w * e[2].exp(),
                a.h * e[3].exp(),
                a.theta + dtheta,
            ));
        }
        let image = render(&gts, config, &mut rng);
        let features = features(&image, &anchors, config.cell_size);
        frames.push(ToyFrame { image, features, gts });
    }
    Ok(ToyDataset { anchors, frames, config: *config })
}

impl ToyFit {
    pub fn predict(&self, features: &Array2<f64>) -> Array2<f64> {
        features.dot(&self.weights.t())
    }

    /// Mean predicted σ per parameter over the anchors holding a gt.
    pub fn mean_sigma(&self, data: &ToyDataset) -> Result<[f64; 6]> {
        let mut acc = [0.0; 6];
        let mut n = 0usize;
        for f in &data.frames {
            let pred = self.predict(&f.features);
            for (a, _) in encode_targets(&data.anchors, &f.gts)? {
                for (j, s) in acc.iter_mut().enumerate() {
                    *s += pred[[a, 7 + j]].exp();
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Empty("no positive anchors".into()));
        }
        Ok(acc.map(|s| s / n as f64))
    }
}

/// Gradient descent from zero weights on the frame-averaged total loss.
/// `trace[i]` is the loss before update `i`; the last entry follows the
/// final update.
pub fn fit_toy_head(data: &ToyDataset, steps: usize, lr: f64) -> Result<ToyFit> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidParam(format!("learning rate {lr}")));
    }
    if data.frames.is_empty() {
        return Err(Error::Empty("toy dataset has no frames".into()));
    }
    let params = LossParams::default();
    let targets: Vec<Vec<(usize, BoxEncoding)>> = data
        .frames
        .iter()
        .map(|f| encode_targets(&data.anchors, &f.gts))
        .collect::<Result<_>>()?;
    let nf = data.frames.len() as f64;
    let mut fit = ToyFit {
        weights: Array2::zeros((PRED_WIDTH, NUM_FEATURES)),
        trace: Vec::with_capacity(steps + 1),
    };
    for step in 0..=steps {
        let mut point = TracePoint { step, total: 0.0, obj: 0.0, loc: 0.0 };
        let mut grad = Array2::<f64>::zeros((PRED_WIDTH, NUM_FEATURES));
        for (f, t) in data.frames.iter().zip(&targets) {
            let pred = fit.predict(&f.features);
            let r = loss_from_targets(pred.view(), t, &params)?;
            point.total += r.total / nf;
            point.obj += r.objectiveness / nf;
            point.loc += r.localization / nf;
            grad += &r.gradients.t().dot(&f.features);
        }
        if !point.total.is_finite() {
            return Err(Error::Divergence { step });
        }
        fit.trace.push(point);
        if step < steps {
            fit.weights.scaled_add(-lr / nf, &grad);
        }
    }
    Ok(fit)
}
