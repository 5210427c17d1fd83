//! Ground-truth generation filters: the 8-element rotation/mirror group for
//! test-time augmentation, soft-NMS fusion of detection sets, and the
//! response-strength AUC filter.
//!
//! Concentrated responses give a low AUC of the normalized cumulative sum,
//! so detections are kept when the concentration `1 - AUC` is high.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nms, soft_nms, SoftNmsMode, DEFAULT_NMS_IOU, DEFAULT_SCORE_FLOOR};
use crate::types::{BevImage, BoxSet, DetectionSet, GroundTruthSet, OrientedBox};

pub const DEFAULT_FUSION_THRESHOLD: f64 = 0.9;
pub const DEFAULT_ENLARGE: f64 = 0.2;
pub const DEFAULT_MIN_CONCENTRATION: f64 = 0.6;

/// Mirror `y -> -y` (if set), then rotate by `quarter_turns · 90°` CCW about
/// the BEV origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SymmetryTransform {
    pub quarter_turns: u8,
    pub mirror: bool,
}

impl SymmetryTransform {
    pub const IDENTITY: SymmetryTransform = SymmetryTransform { quarter_turns: 0, mirror: false };

    pub fn new(quarter_turns: u8, mirror: bool) -> Self {
        SymmetryTransform { quarter_turns: quarter_turns % 4, mirror }
    }

    pub fn all() -> [SymmetryTransform; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, t) in out.iter_mut().enumerate() {
            *t = SymmetryTransform::new((i % 4) as u8, i >= 4);
        }
        out
    }

    pub fn inverse(self) -> Self {
        if self.mirror {
            self
        } else {
            SymmetryTransform::new((4 - self.quarter_turns) % 4, false)
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(self, other: SymmetryTransform) -> Self {
        let k = if self.mirror {
            self.quarter_turns + 4 - other.quarter_turns
        } else {
            self.quarter_turns + other.quarter_turns
        };
        SymmetryTransform::new(k % 4, self.mirror ^ other.mirror)
    }

    pub fn apply_point(self, x: f64, y: f64) -> (f64, f64) {
        let y = if self.mirror { -y } else { y };
        match self.quarter_turns % 4 {
            0 => (x, y),
            1 => (-y, x),
            2 => (-x, -y),
            _ => (y, -x),
        }
    }

    pub fn apply_box(self, b: &OrientedBox) -> OrientedBox {
        let (cx, cy) = self.apply_point(b.cx, b.cy);
        let theta = if self.mirror { -b.theta } else { b.theta };
        let mut out = OrientedBox::new(cx, cy, b.w, b.h, theta + self.quarter_turns as f64 * FRAC_PI_2);
        out.score = b.score;
        out.variances = b.variances;
        out
    }
}

pub fn transform_boxes(boxes: &BoxSet, t: SymmetryTransform) -> BoxSet {
    BoxSet::new(boxes.frame_id, boxes.boxes.iter().map(|b| t.apply_box(b)).collect())
}

pub fn inverse_transform_boxes(boxes: &BoxSet, t: SymmetryTransform) -> BoxSet {
    transform_boxes(boxes, t.inverse())
}

/// Concatenates the sets and fuses them with linear soft-NMS.
pub fn fuse_detection_sets(
    sets: &[DetectionSet],
    soft_nms_threshold: f64,
    score_floor: f64,
) -> Result<DetectionSet> {
    let Some(first) = sets.first() else {
        return Err(Error::Empty("no detection sets to fuse".into()));
    };
    let mut all = Vec::with_capacity(sets.iter().map(BoxSet::len).sum());
    for s in sets {
        if s.frame_id != first.frame_id {
            return Err(Error::FrameMismatch { expected: first.frame_id, found: s.frame_id });
        }
        all.extend_from_slice(&s.boxes);
    }
    Ok(soft_nms(
        &BoxSet::new(first.frame_id, all),
        soft_nms_threshold,
        SoftNmsMode::Linear,
        score_floor,
    ))
}

/// Mean of the normalized cumulative sum of the ascending pixel values.
/// Negative values count as zero; an all-zero set behaves like a constant
/// one and yields `(n + 1) / (2n)`.
pub fn cumulative_auc(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("response region contains no pixels".into()));
    }
    let n = values.len();
    let mut v: Vec<f64> = values.iter().map(|x| x.max(0.0)).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParam("non-finite pixel value".into()));
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return Ok((n as f64 + 1.0) / (2.0 * n as f64));
    }
    v.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    let mut area = 0.0;
    for x in v {
        acc += x;
        area += acc / total;
    }
    Ok((area / n as f64).clamp(0.0, 1.0))
}

/// AUC over the pixels of `b` grown by `enlarge` in both w and h.
pub fn response_auc(bev: &BevImage, b: &OrientedBox, enlarge: f64) -> Result<f64> {
    let mut grown = *b;
    grown.w *= 1.0 + enlarge;
    grown.h *= 1.0 + enlarge;
    cumulative_auc(&bev.values_in_box(&grown))
}

/// Keeps detections whose concentration `1 - AUC` reaches `min_concentration`.
/// Detections covering no pixel are dropped.
pub fn filter_low_response(
    dets: &DetectionSet,
    bev: &BevImage,
    min_concentration: f64,
    enlarge: f64,
) -> DetectionSet {
    let kept = dets
        .boxes
        .iter()
        .filter(|b| match response_auc(bev, b, enlarge) {
            Ok(auc) => 1.0 - auc >= min_concentration,
            Err(_) => false,
        })
        .copied()
        .collect();
    BoxSet::new(dets.frame_id, kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutolabelParams {
    pub fusion_threshold: f64,
    pub score_floor: f64,
    pub enlarge: f64,
    pub min_concentration: f64,
    /// Hard NMS after filtering; `None` keeps soft-NMS duplicates.
    pub final_nms_iou: Option<f64>,
}

impl Default for AutolabelParams {
    fn default() -> Self {
        AutolabelParams {
            fusion_threshold: DEFAULT_FUSION_THRESHOLD,
            score_floor: DEFAULT_SCORE_FLOOR,
            enlarge: DEFAULT_ENLARGE,
            min_concentration: DEFAULT_MIN_CONCENTRATION,
            final_nms_iou: Some(DEFAULT_NMS_IOU),
        }
    }
}

/// Fuse, then filter by response strength.
pub fn autolabel_frame(
    sets: &[DetectionSet],
    bev: &BevImage,
    params: &AutolabelParams,
) -> Result<GroundTruthSet> {
    let fused = fuse_detection_sets(sets, params.fusion_threshold, params.score_floor)?;
    let filtered = filter_low_response(&fused, bev, params.min_concentration, params.enlarge);
    let mut out = match params.final_nms_iou {
        Some(t) => nms(&filtered, t),
        None => filtered,
    };
    for b in &mut out.boxes {
        b.score = None;
        b.variances = None;
    }
    Ok(out)
}

/// Stand-in for a LiDAR detector: jittered true boxes, random misses and
/// false positives inside a range/azimuth sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyDetector {
    pub center_std: f64,
    pub size_log_std: f64,
    pub angle_std: f64,
    pub miss_prob: f64,
    pub false_positive_prob: f64,
    pub max_range: f64,
    pub max_azimuth: f64,
    /// Scores of true detections are uniform in this interval.
    pub tp_score: (f64, f64),
    pub fp_score: (f64, f64),
}

impl Default for NoisyDetector {
    fn default() -> Self {
        NoisyDetector {
            center_std: 0.15,
            size_log_std: 0.05,
            angle_std: 3f64.to_radians(),
            miss_prob: 0.1,
            false_positive_prob: 0.5,
            max_range: 30.0,
            max_azimuth: 60f64.to_radians(),
            tp_score: (0.6, 0.95),
            fp_score: (0.3, 0.9),
        }
    }
}

impl NoisyDetector {
    fn draw_score(range: (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
        if range.1 > range.0 {
            rng.random_range(range.0..range.1)
        } else {
            range.0
        }
    }

    /// `frame` maps the sensor sector into the coordinates of `gts`, so false
    /// positives land where the sensor could see.
    pub fn detect(
        &self,
        gts: &GroundTruthSet,
        frame: SymmetryTransform,
        rng: &mut ChaCha8Rng,
    ) -> DetectionSet {
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::new();
        for g in &gts.boxes {
            if rng.random::<f64>() < self.miss_prob {
                continue;
            }
            let b = OrientedBox::new(
                g.cx + self.center_std * n.sample(rng),
                g.cy + self.center_std * n.sample(rng),
                g.w * (self.size_log_std * n.sample(rng)).exp(),
                g.h * (self.size_log_std * n.sample(rng)).exp(),
                g.theta + self.angle_std * n.sample(rng),
            );
            out.push(b.with_score(Self::draw_score(self.tp_score, rng)));
        }
        if rng.random::<f64>() < self.false_positive_prob {
            let r = rng.random_range(5.0..self.max_range.max(5.0 + 1e-9));
            let a = rng.random_range(-self.max_azimuth..=self.max_azimuth);
            let b = OrientedBox::new(
                r * a.cos(),
                r * a.sin(),
                1.8,
                4.5,
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            out.push(frame.apply_box(&b).with_score(Self::draw_score(self.fp_score, rng)));
        }
        BoxSet::new(gts.frame_id, out)
    }
}

/// 16 detection sets: two detectors, each run on the eight transformed
/// frames, with boxes mapped back to the original frame.
pub fn tta_detection_sets(
    gts: &GroundTruthSet,
    detectors: &[NoisyDetector; 2],
    seed: u64,
) -> Vec<DetectionSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(16);
    for det in detectors {
        for t in SymmetryTransform::all() {
            let seen = transform_boxes(gts, t);
            let found = det.detect(&seen, t, &mut rng);
            out.push(inverse_transform_boxes(&found, t));
        }
    }
    out
}
