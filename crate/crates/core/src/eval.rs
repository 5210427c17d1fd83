//! Class-agnostic average precision under oriented IoU.
//!
//! Detections are matched greedily in descending score order to the unmatched
//! ground-truth box of highest IoU. AP is the area under the all-points
//! precision envelope of a single score sweep across all frames.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::box_iou;
use crate::types::{DetectionSet, GroundTruthSet, OrientedBox};

pub const DEFAULT_IOU_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Table rows in report order.
pub const FORMAT_ROWS: [&str; 4] = ["data-fft", "data-music", "img-fft", "img-music"];

/// Detection indices in descending score order, ties by index.
fn score_order(dets: &[OrientedBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].score_or_zero().total_cmp(&dets[a].score_or_zero()));
    idx
}

/// For each detection (input order), the gt it matched, if any.
pub fn match_frame(dets: &[OrientedBox], gts: &[OrientedBox], iou_threshold: f64) -> Vec<Option<usize>> {
    let mut matched = vec![None; dets.len()];
    let mut used = vec![false; gts.len()];
    for d in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] {
                continue;
            }
            let iou = box_iou(&dets[d], gt);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            matched[d] = Some(g);
        }
    }
    matched
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub iou_threshold: f64,
    pub num_gt: usize,
    /// One point per detection in sweep order.
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("recall,precision,score\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.recall, p.precision, p.score);
        }
        s
    }
}

/// Area under the all-points precision envelope.
pub fn all_points_ap(points: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (p, e) in points.iter().zip(envelope) {
        ap += (p.recall - prev) * e;
        prev = p.recall;
    }
    ap
}

/// Pairs detection and gt sets by frame id. Detection frames without a gt
/// frame are an error; gt frames without detections count as misses.
fn pair_frames<'a>(
    dets: &'a [DetectionSet],
    gts: &'a [GroundTruthSet],
) -> Result<Vec<(&'a [OrientedBox], &'a [OrientedBox])>> {
    let mut by_frame: BTreeMap<u64, (Vec<&OrientedBox>, &[OrientedBox])> = BTreeMap::new();
    for g in gts {
        if by_frame.insert(g.frame_id, (Vec::new(), &g.boxes)).is_some() {
            return Err(Error::InvalidParam(format!("duplicate ground-truth frame {}", g.frame_id)));
        }
    }
    let missing: BTreeSet<u64> = dets
        .iter()
        .map(|d| d.frame_id)
        .filter(|f| !by_frame.contains_key(f))
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidParam(format!(
            "detections for frames without ground truth: {missing:?}"
        )));
    }
    let mut det_frames: BTreeMap<u64, &[OrientedBox]> = BTreeMap::new();
    for d in dets {
        if det_frames.insert(d.frame_id, &d.boxes).is_some() {
            return Err(Error::InvalidParam(format!("duplicate detection frame {}", d.frame_id)));
        }
    }
    Ok(by_frame
        .into_iter()
        .map(|(f, (_, g))| (det_frames.get(&f).copied().unwrap_or(&[]), g))
        .collect())
}

pub fn average_precision(
    dets: &[DetectionSet],
    gts: &[GroundTruthSet],
    iou_threshold: f64,
) -> Result<PrCurve> {
    let frames = pair_frames(dets, gts)?;
    let num_gt: usize = frames.iter().map(|(_, g)| g.len()).sum();
    if num_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut sweep: Vec<(f64, bool)> = Vec::new();
    for (d, g) in &frames {
        let m = match_frame(d, g, iou_threshold);
        for i in score_order(d) {
            sweep.push((d[i].score_or_zero(), m[i].is_some()));
        }
    }
    // stable: equal scores keep frame order, then within-frame rank
    sweep.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let points: Vec<PrPoint> = sweep
        .iter()
        .map(|&(score, hit)| {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                recall: tp as f64 / num_gt as f64,
                precision: tp as f64 / (tp + fp) as f64,
                score,
            }
        })
        .collect();
    let ap = all_points_ap(&points);
    Ok(PrCurve { iou_threshold, num_gt, points, ap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApRow {
    pub format: String,
    pub ap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApTable {
    pub iou_thresholds: Vec<f64>,
    pub rows: Vec<ApRow>,
}

impl ApTable {
    pub fn row(&self, format: &str) -> Option<&ApRow> {
        self.rows.iter().find(|r| r.format == format)
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.format.len()).max().unwrap_or(6).max(6);
        let mut s = format!("{:<width$}", "format");
        for t in &self.iou_thresholds {
            let _ = write!(s, "  {:>8}", format!("AP@{t}"));
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<width$}", r.format);
            for ap in &r.ap {
                let _ = write!(s, "  {:>8.4}", ap);
            }
            s.push('\n');
        }
        s
    }
}

/// AP table over the four format rows, plus the PR curves per row and
/// threshold.
pub fn evaluate_formats(
    results: &BTreeMap<String, Vec<DetectionSet>>,
    gts: &[GroundTruthSet],
    iou_thresholds: &[f64],
) -> Result<(ApTable, Vec<(String, PrCurve)>)> {
    let mut rows = Vec::with_capacity(FORMAT_ROWS.len());
    let mut curves = Vec::new();
    for name in FORMAT_ROWS {
        let dets = results
            .get(name)
            .ok_or_else(|| Error::MissingFormat(name.to_string()))?;
        let mut ap = Vec::with_capacity(iou_thresholds.len());
        for &t in iou_thresholds {
            let c = average_precision(dets, gts, t)?;
            ap.push(c.ap);
            curves.push((name.to_string(), c));
        }
        rows.push(ApRow { format: name.to_string(), ap });
    }
    Ok((ApTable { iou_thresholds: iou_thresholds.to_vec(), rows }, curves))
}
