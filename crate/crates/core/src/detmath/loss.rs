use ndarray::{Array2, ArrayView2};

use super::anchors::Anchor;
use super::assign::assign_targets;
use super::encoding::{encode_box, BoxEncoding};
use crate::error::{Error, Result};
use crate::types::OrientedBox;

/// Prediction row layout: `[logit, x_o, y_o, w_o, h_o, cos, sin, 6 × log σ]`.
pub const PRED_WIDTH: usize = 13;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Smooth L1 with β = 1: value and derivative.
pub fn smooth_l1(d: f64) -> (f64, f64) {
    if d.abs() < 1.0 {
        (0.5 * d * d, d)
    } else {
        (d.abs() - 0.5, d.signum())
    }
}

/// Focal loss evaluated from a logit: value and derivative w.r.t. the logit.
pub fn focal_loss(logit: f64, positive: bool, alpha: f64, gamma: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    if positive {
        let log_p = -softplus(-logit);
        let q = 1.0 - p;
        let value = -alpha * q.powf(gamma) * log_p;
        let grad = alpha * q.powf(gamma) * (gamma * p * log_p - q);
        (value, grad)
    } else {
        let log_q = -softplus(logit);
        let q = 1.0 - p;
        let value = -(1.0 - alpha) * p.powf(gamma) * log_q;
        let grad = (1.0 - alpha) * p.powf(gamma) * (p - gamma * q * log_q);
        (value, grad)
    }
}

/// One parameter's term `SL1(r)/σ + log σ` with σ = exp(log_sigma):
/// value, d/dr and d/dlog_sigma.
pub fn aleatoric_term(residual: f64, log_sigma: f64) -> (f64, f64, f64) {
    let (sl1, dsl1) = smooth_l1(residual);
    let inv = (-log_sigma).exp();
    (inv * sl1 + log_sigma, inv * dsl1, 1.0 - inv * sl1)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AleatoricGrad {
    pub pred: [f64; 6],
    pub log_sigma: [f64; 6],
}

/// Sum of the six per-parameter terms for one box.
pub fn aleatoric_loss(pred: &[f64; 6], gt: &[f64; 6], log_sigma: &[f64; 6]) -> (f64, AleatoricGrad) {
    let mut value = 0.0;
    let mut g = AleatoricGrad::default();
    for j in 0..6 {
        let (v, dr, ds) = aleatoric_term(pred[j] - gt[j], log_sigma[j]);
        value += v;
        g.pred[j] = dr;
        g.log_sigma[j] = ds;
    }
    (value, g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub alpha: f64,
    pub gamma: f64,
    pub w0: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams { alpha: 0.25, gamma: 2.0, w0: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub objectiveness: f64,
    pub localization: f64,
    /// Localization split by parameter, summed over positives.
    pub per_parameter: [f64; 6],
    pub num_positives: usize,
    /// d total / d prediction, same shape as the predictions.
    pub gradients: Array2<f64>,
}

/// Assigns gts to anchors and encodes the regression targets.
pub fn encode_targets(anchors: &[Anchor], gts: &[OrientedBox]) -> Result<Vec<(usize, BoxEncoding)>> {
    if gts.is_empty() {
        return Ok(Vec::new());
    }
    let assignment = assign_targets(anchors, gts)?;
    let mut out = Vec::with_capacity(gts.len());
    for (g, a) in gts.iter().zip(assignment) {
        if let Some(a) = a {
            out.push((a, encode_box(&anchors[a], g)?));
        }
    }
    Ok(out)
}

/// Focal loss over every anchor plus `w0` times the aleatoric loss over the
/// anchors that received a gt. Unassigned anchors are all negatives.
pub fn total_loss(
    predictions: ArrayView2<f64>,
    anchors: &[Anchor],
    gts: &[OrientedBox],
    params: &LossParams,
) -> Result<LossReport> {
    if predictions.dim() != (anchors.len(), PRED_WIDTH) {
        return Err(Error::ShapeMismatch(format!(
            "predictions {:?}, expected ({}, {PRED_WIDTH})",
            predictions.dim(),
            anchors.len()
        )));
    }
    let targets = encode_targets(anchors, gts)?;
    loss_from_targets(predictions, &targets, params)
}

/// [`total_loss`] with assignment already done.
pub fn loss_from_targets(
    predictions: ArrayView2<f64>,
    targets: &[(usize, BoxEncoding)],
    params: &LossParams,
) -> Result<LossReport> {
    let n = predictions.nrows();
    if predictions.ncols() != PRED_WIDTH {
        return Err(Error::ShapeMismatch(format!(
            "prediction rows have {} values, expected {PRED_WIDTH}",
            predictions.ncols()
        )));
    }
    let mut positive = vec![false; n];
    for &(a, _) in targets {
        if a >= n {
            return Err(Error::ShapeMismatch(format!("target anchor {a} out of {n}")));
        }
        positive[a] = true;
    }
    let mut grads = Array2::zeros((n, PRED_WIDTH));
    let mut obj = 0.0;
    for a in 0..n {
        let (v, g) = focal_loss(predictions[[a, 0]], positive[a], params.alpha, params.gamma);
        obj += v;
        grads[[a, 0]] = g;
    }
    let mut loc = 0.0;
    let mut per_parameter = [0.0; 6];
    for (a, enc) in targets {
        let t = enc.to_array();
        for j in 0..6 {
            let (v, dr, ds) = aleatoric_term(predictions[[*a, 1 + j]] - t[j], predictions[[*a, 7 + j]]);
            loc += v;
            per_parameter[j] += v;
            grads[[*a, 1 + j]] = params.w0 * dr;
            grads[[*a, 7 + j]] = params.w0 * ds;
        }
    }
    Ok(LossReport {
        total: obj + params.w0 * loc,
        objectiveness: obj,
        localization: loc,
        per_parameter,
        num_positives: targets.len(),
        gradients: grads,
    })
}
