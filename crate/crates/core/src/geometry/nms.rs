use super::iou::box_iou;
use crate::types::{BoxSet, DetectionSet, OrientedBox};

/// No two cars overlap in a BEV projection, so any overlap suppresses.
pub const DEFAULT_NMS_IOU: f64 = 0.0001;
/// Boxes whose decayed score falls below this are dropped by soft-NMS.
pub const DEFAULT_SCORE_FLOOR: f64 = 0.1;

/// Indices sorted by descending score; equal scores keep insertion order.
fn score_order(boxes: &[OrientedBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..boxes.len()).collect();
    idx.sort_by(|&a, &b| boxes[b].score_or_zero().total_cmp(&boxes[a].score_or_zero()));
    idx
}

/// Greedy hard NMS. Survivors have pairwise IoU <= `iou_threshold` and are
/// returned in descending score order.
pub fn nms(dets: &DetectionSet, iou_threshold: f64) -> DetectionSet {
    let mut kept: Vec<OrientedBox> = Vec::new();
    for i in score_order(&dets.boxes) {
        let cand = &dets.boxes[i];
        if kept.iter().all(|k| box_iou(k, cand) <= iou_threshold) {
            kept.push(*cand);
        }
    }
    BoxSet::new(dets.frame_id, kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftNmsMode {
    /// `s <- s * (1 - iou)` when `iou > threshold`.
    #[default]
    Linear,
    /// `s <- s * exp(-iou^2 / sigma)`.
    Gaussian,
}

impl std::str::FromStr for SoftNmsMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(SoftNmsMode::Linear),
            "gaussian" => Ok(SoftNmsMode::Gaussian),
            other => Err(crate::error::Error::InvalidParam(format!(
                "unknown soft-NMS mode {other:?}"
            ))),
        }
    }
}

/// Soft-NMS: repeatedly select the best remaining box and decay the scores
/// of the rest by their overlap with it. Boxes falling below `score_floor`
/// are dropped. Output is in selection order with decayed scores.
pub fn soft_nms(
    dets: &DetectionSet,
    sigma_or_threshold: f64,
    mode: SoftNmsMode,
    score_floor: f64,
) -> DetectionSet {
    let mut pool: Vec<OrientedBox> = dets
        .boxes
        .iter()
        .filter(|b| b.score_or_zero() >= score_floor)
        .copied()
        .collect();
    let mut out = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        // first maximum wins ties
        let best = pool
            .iter()
            .enumerate()
            .fold(0, |bi, (i, b)| {
                if b.score_or_zero() > pool[bi].score_or_zero() {
                    i
                } else {
                    bi
                }
            });
        let selected = pool.remove(best);
        for b in pool.iter_mut() {
            let iou = box_iou(&selected, b);
            let s = b.score_or_zero();
            let decayed = match mode {
                SoftNmsMode::Linear if iou > sigma_or_threshold => s * (1.0 - iou),
                SoftNmsMode::Linear => s,
                SoftNmsMode::Gaussian => s * (-iou * iou / sigma_or_threshold).exp(),
            };
            b.score = Some(decayed.min(s));
        }
        pool.retain(|b| b.score_or_zero() >= score_floor);
        out.push(selected);
    }
    BoxSet::new(dets.frame_id, out)
}
