//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use radar_obb::detmath::Anchor;
use radar_obb::geometry::box_iou;
use radar_obb::{BoxSet, OrientedBox};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn corners(b: &OrientedBox) -> [[f64; 2]; 4] {
    let (s, c) = b.theta.sin_cos();
    let (hh, hw) = (0.5 * b.h, 0.5 * b.w);
    let mut out = [[0.0; 2]; 4];
    for (k, (u, v)) in [(hh, hw), (-hh, hw), (-hh, -hw), (hh, -hw)].into_iter().enumerate() {
        out[k] = [b.cx + u * c - v * s, b.cy + u * s + v * c];
    }
    out
}

/// Horizontal extent of a convex quad at height `y`.
fn span_at(poly: &[[f64; 2]; 4], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..4 {
        let p = poly[k];
        let q = poly[(k + 1) % 4];
        let (y0, y1) = (p[1].min(q[1]), p[1].max(q[1]));
        if y < y0 || y > y1 || y1 == y0 {
            continue;
        }
        let t = (y - p[1]) / (q[1] - p[1]);
        let x = p[0] + t * (q[0] - p[0]);
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Pixel centers `x0 + (i + 0.5) dx`, `i < n`, falling in `[lo, hi]`.
fn count_centers(lo: f64, hi: f64, x0: f64, dx: f64, n: usize) -> usize {
    let first = ((lo - x0) / dx - 0.5).ceil().max(0.0);
    let last = ((hi - x0) / dx - 0.5).floor().min(n as f64 - 1.0);
    if last < first {
        0
    } else {
        (last - first) as usize + 1
    }
}

/// IoU by counting pixel centers of an `n × n` raster over the joint
/// bounding box of both boxes. Rows are counted by scanline spans, which is
/// equivalent to testing every pixel center.
pub fn raster_iou(a: &OrientedBox, b: &OrientedBox, n: usize) -> f64 {
    let (pa, pb) = (corners(a), corners(b));
    let all: Vec<[f64; 2]> = pa.iter().chain(pb.iter()).copied().collect();
    let x0 = all.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let x1 = all.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let y0 = all.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let y1 = all.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut ca, mut cb, mut ci) = (0usize, 0usize, 0usize);
    for j in 0..n {
        let y = y0 + (j as f64 + 0.5) * dy;
        let sa = span_at(&pa, y);
        let sb = span_at(&pb, y);
        if let Some((l, h)) = sa {
            ca += count_centers(l, h, x0, dx, n);
        }
        if let Some((l, h)) = sb {
            cb += count_centers(l, h, x0, dx, n);
        }
        if let (Some(s), Some(t)) = (sa, sb) {
            ci += count_centers(s.0.max(t.0), s.1.min(t.1), x0, dx, n);
        }
    }
    let union = ca + cb - ci;
    if union == 0 {
        0.0
    } else {
        ci as f64 / union as f64
    }
}

/// Minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Central finite difference.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Repeatedly picks the best free (gt, anchor) pair by IoU desc, center
/// distance asc, anchor index asc, gt index asc.
pub fn brute_assign(anchors: &[Anchor], gts: &[OrientedBox]) -> Vec<Option<usize>> {
    let mut out = vec![None; gts.len()];
    let mut taken = vec![false; anchors.len()];
    loop {
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if out[gi].is_some() {
                continue;
            }
            for (ai, a) in anchors.iter().enumerate() {
                if taken[ai] {
                    continue;
                }
                let iou = box_iou(g, &a.as_box());
                let dist = (g.cx - a.cx).hypot(g.cy - a.cy);
                let cand = (iou, dist, ai, gi);
                let better = match best {
                    None => true,
                    Some(b) => {
                        cand.0 > b.0
                            || (cand.0 == b.0 && cand.1 < b.1)
                            || (cand.0 == b.0 && cand.1 == b.1 && cand.2 < b.2)
                            || (cand.0 == b.0 && cand.1 == b.1 && cand.2 == b.2 && cand.3 < b.3)
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        match best {
            Some((_, _, ai, gi)) => {
                out[gi] = Some(ai);
                taken[ai] = true;
            }
            None => return out,
        }
    }
}

/// Greedy matching replayed one detection at a time: the highest-scoring
/// unprocessed detection (lowest index on ties) takes the free gt of highest
/// IoU (lowest index on ties) if that IoU reaches the threshold.
pub fn greedy_match(dets: &[OrientedBox], gts: &[OrientedBox], thr: f64) -> Vec<Option<usize>> {
    let mut done = vec![false; dets.len()];
    let mut used = vec![false; gts.len()];
    let mut out = vec![None; dets.len()];
    for _ in 0..dets.len() {
        let mut pick = None;
        for i in 0..dets.len() {
            if !done[i] && pick.is_none_or(|p: usize| dets[i].score_or_zero() > dets[p].score_or_zero()) {
                pick = Some(i);
            }
        }
        let d = pick.expect("one detection left");
        done[d] = true;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let iou = box_iou(&dets[d], gt);
            if !used[g] && iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            out[d] = Some(g);
        }
    }
    out
}

/// AP by sweeping every distinct score as a confidence threshold and
/// re-matching each frame from scratch. Assumes distinct scores.
pub fn brute_ap(frames: &[(Vec<OrientedBox>, Vec<OrientedBox>)], thr: f64) -> f64 {
    let num_gt: usize = frames.iter().map(|(_, g)| g.len()).sum();
    let mut scores: Vec<f64> = frames
        .iter()
        .flat_map(|(d, _)| d.iter().map(|b| b.score_or_zero()))
        .collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let mut pr = Vec::new();
    for &s in &scores {
        let (mut tp, mut n) = (0usize, 0usize);
        for (d, g) in frames {
            let kept: Vec<OrientedBox> = d.iter().filter(|b| b.score_or_zero() >= s).copied().collect();
            n += kept.len();
            tp += greedy_match(&kept, g, thr).iter().filter(|m| m.is_some()).count();
        }
        pr.push((tp as f64 / num_gt as f64, tp as f64 / n as f64));
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for k in 0..pr.len() {
        let best = pr[k..].iter().map(|p| p.1).fold(0.0, f64::max);
        ap += (pr[k].0 - prev) * best;
        prev = pr[k].0;
    }
    ap
}

/// Greedy hard NMS replay.
pub fn brute_nms(boxes: &[OrientedBox], thr: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score_or_zero().total_cmp(&boxes[a].score_or_zero()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| box_iou(&boxes[k], &boxes[i]) <= thr) {
            kept.push(i);
        }
    }
    kept
}

/// Linear soft-NMS replay with an explicit IoU table.
pub fn replay_soft_nms(scores: &[f64], iou: &dyn Fn(usize, usize) -> f64, thr: f64, floor: f64) -> Vec<(usize, f64)> {
    let mut live: Vec<(usize, f64)> = scores.iter().copied().enumerate().filter(|(_, s)| *s >= floor).collect();
    let mut out = Vec::new();
    while !live.is_empty() {
        let mut bi = 0;
        for k in 1..live.len() {
            if live[k].1 > live[bi].1 {
                bi = k;
            }
        }
        let (sel, s) = live.remove(bi);
        for e in live.iter_mut() {
            let o = iou(sel, e.0);
            if o > thr {
                e.1 *= 1.0 - o;
            }
        }
        live.retain(|e| e.1 >= floor);
        out.push((sel, s));
    }
    out
}

pub fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> OrientedBox {
    OrientedBox::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(0.5..3.0),
        rng.random_range(0.5..5.0),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// Frames of jittered detections around random gts, with distinct scores.
pub fn instance(rng: &mut ChaCha8Rng, frames: usize, max_dets: usize) -> Vec<(Vec<OrientedBox>, Vec<OrientedBox>)> {
    let mut out = Vec::new();
    let mut next_score = 0usize;
    let mut scores: Vec<f64> = (0..frames * max_dets).map(|i| (i as f64 + 0.5) / (frames * max_dets) as f64).collect();
    for i in (1..scores.len()).rev() {
        scores.swap(i, rng.random_range(0..=i));
    }
    for _ in 0..frames {
        let ng = rng.random_range(1..=4);
        let gts: Vec<OrientedBox> = (0..ng)
            .map(|k| OrientedBox::new(6.0 * k as f64, rng.random_range(-1.0..1.0), 1.8, 4.5, rng.random_range(-0.3..0.3)))
            .collect();
        let nd = rng.random_range(0..=max_dets);
        let dets: Vec<OrientedBox> = (0..nd)
            .map(|_| {
                let g = gts[rng.random_range(0..gts.len())];
                let b = OrientedBox::new(
                    g.cx + rng.random_range(-1.5..1.5),
                    g.cy + rng.random_range(-1.5..1.5),
                    1.8,
                    4.5,
                    g.theta + rng.random_range(-0.5..0.5),
                );
                next_score += 1;
                b.with_score(scores[next_score - 1])
            })
            .collect();
        out.push((dets, gts));
    }
    out
}

pub fn to_sets(frames: &[(Vec<OrientedBox>, Vec<OrientedBox>)]) -> (Vec<BoxSet>, Vec<BoxSet>) {
    let d = frames.iter().enumerate().map(|(i, f)| BoxSet::new(i as u64, f.0.clone())).collect();
    let g = frames.iter().enumerate().map(|(i, f)| BoxSet::new(i as u64, f.1.clone())).collect();
    (d, g)
}
