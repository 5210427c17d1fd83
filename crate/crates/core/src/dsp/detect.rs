//! Classical stand-in for a learned detector: CFAR, clustering, and a
//! minimum-area oriented rectangle per cluster.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;

use super::cfar::{ca_cfar, ca_cfar_masked, cfar_alpha, CfarParams};
use crate::error::{Error, Result};
use crate::geometry::{min_area_rect, Point};
use crate::types::{normalize_angle, BevImage, BoxSet, DetectionSet, OrientedBox, PolarMap};

/// How a cluster becomes a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RectFit {
    /// Minimum-area enclosing rectangle (rotating calipers).
    MinArea,
    /// Heading that keeps cells closest to a rectangle side (L-shape
    /// closeness), then the enclosing extents along it.
    Closeness,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub cfar: CfarParams,
    /// Cells weaker than the image peak by more than this never detect.
    pub dynamic_range_db: f64,
    /// Detections whose cell centres lie within this distance (meters) join
    /// one cluster.
    pub link_distance: f64,
    pub min_cells: usize,
    pub rect_fit: RectFit,
    /// Expected `(w, h)` of a vehicle, meters. Rectangles smaller than this
    /// grow to it, extending away from the sensor since only the facing
    /// boundary reflects.
    pub size_prior: Option<(f64, f64)>,
    /// Clusters are merged while their union's rectangle stays within the
    /// size prior grown by this margin (meters), joining the fragments of
    /// one vehicle outline. `None` keeps the link clusters.
    pub merge_margin: Option<f64>,
    /// A cluster rectangle whose long side reaches this (meters) is taken to
    /// span the vehicle's length; shorter ones are its short face.
    pub length_threshold: f64,
    /// Cluster energy (dB over the median cell) mapped to score 1.
    pub score_span_db: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            cfar: CfarParams::default(),
            dynamic_range_db: 25.0,
            link_distance: 1.0,
            min_cells: 4,
            rect_fit: RectFit::Closeness,
            size_prior: Some((1.8, 4.5)),
            merge_margin: Some(1.0),
            length_threshold: 3.15,
            score_span_db: 60.0,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clusters of points closer than `link`, in first-member
/// order.
fn clusters(points: &[Point], link: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    let key = |p: &Point| ((p[0] / link).floor() as i64, (p[1] / link).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let link2 = link * link;
    for (i, p) in points.iter().enumerate() {
        let (kx, ky) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = buckets.get(&(kx + dx, ky + dy)) else { continue };
                for &j in bucket {
                    if j <= i {
                        continue;
                    }
                    let q = points[j];
                    if (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) <= link2 {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
    }
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in 0..points.len() {
        let r = find(&mut parent, i);
        let slot = *index.entry(r).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[slot].push(i);
    }
    out
}

fn median(values: &Array2<f64>) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().collect();
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    v.select_nth_unstable_by(mid, f64::total_cmp);
    v[mid]
}

/// Grows `b` to at least the prior size. A rectangle whose long side is
/// shorter than `length_threshold` is taken to be a vehicle's short face,
/// so its long side becomes the width. Growth moves the centre away from
/// the sensor.
fn grow_to_prior(b: OrientedBox, prior: (f64, f64), length_threshold: f64) -> OrientedBox {
    let (pw, ph) = prior;
    let (long, short, axis) = if b.h >= b.w {
        (b.h, b.w, b.theta)
    } else {
        (b.w, b.h, b.theta + FRAC_PI_2)
    };
    let (h, w, theta) = if long >= length_threshold {
        (long.max(ph), short.max(pw), axis)
    } else {
        (short.max(ph), long.max(pw), axis + FRAC_PI_2)
    };
    let (old_h, old_w) = if (theta - axis).abs() < 1e-12 { (long, short) } else { (short, long) };
    let (s, c) = theta.sin_cos();
    let u = [c, s];
    let v = [-s, c];
    let away = |d: [f64; 2]| if d[0] * b.cx + d[1] * b.cy >= 0.0 { 1.0 } else { -1.0 };
    let du = 0.5 * (h - old_h) * away(u);
    let dv = 0.5 * (w - old_w) * away(v);
    let mut out = b;
    out.cx += du * u[0] + dv * v[0];
    out.cy += du * u[1] + dv * v[1];
    out.w = w;
    out.h = h;
    out.theta = normalize_angle(theta);
    out
}

/// Headings tried by [`closeness_rect`], over a quarter turn.
const CLOSENESS_STEPS: usize = 90;

/// Distance floor of the closeness criterion, meters.
const CLOSENESS_FLOOR: f64 = 0.1;

/// L-shape closeness fit: the heading in `[0, pi/2)` maximising
/// `sum w / max(d, floor)`, `d` the distance of a point to its nearest
/// rectangle side, then the enclosing rectangle of `cells` along it.
fn closeness_rect(centres: &[Point], weights: &[f64], cells: &[Point]) -> Option<OrientedBox> {
    if centres.is_empty() {
        return None;
    }
    let extents = |theta: f64, pts: &[Point]| {
        let (s, c) = theta.sin_cos();
        let mut e = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in pts {
            let (a, b) = (p[0] * c + p[1] * s, -p[0] * s + p[1] * c);
            e = [e[0].min(a), e[1].max(a), e[2].min(b), e[3].max(b)];
        }
        e
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for step in 0..CLOSENESS_STEPS {
        let theta = step as f64 * FRAC_PI_2 / CLOSENESS_STEPS as f64;
        let e = extents(theta, centres);
        let (s, c) = theta.sin_cos();
        let score: f64 = centres
            .iter()
            .zip(weights)
            .map(|(p, w)| {
                let (a, b) = (p[0] * c + p[1] * s, -p[0] * s + p[1] * c);
                let d = (a - e[0]).min(e[1] - a).min((b - e[2]).min(e[3] - b));
                w / d.max(CLOSENESS_FLOOR)
            })
            .sum();
        if score > best.0 {
            best = (score, theta);
        }
    }
    let theta = best.1;
    let e = extents(theta, cells);
    let (s, c) = theta.sin_cos();
    let (a, b) = (0.5 * (e[0] + e[1]), 0.5 * (e[2] + e[3]));
    let (cx, cy) = (a * c - b * s, a * s + b * c);
    let (la, lb) = (e[1] - e[0], e[3] - e[2]);
    Some(if la >= lb {
        OrientedBox::new(cx, cy, lb, la, theta)
    } else {
        OrientedBox::new(cx, cy, la, lb, theta + FRAC_PI_2)
    })
}

/// Greedy merging of clusters, smallest union first, while the union of
/// their points fits a `(w, h)` rectangle.
fn merge_fragments(mut groups: Vec<Vec<usize>>, points: &[Point], limit: (f64, f64)) -> Vec<Vec<usize>> {
    let (max_w, max_h) = limit;
    let centroid = |g: &[usize]| {
        let n = g.len() as f64;
        let (x, y) = g.iter().fold((0.0, 0.0), |a, &k| (a.0 + points[k][0], a.1 + points[k][1]));
        [x / n, y / n]
    };
    loop {
        let cents: Vec<Point> = groups.iter().map(|g| centroid(g)).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let (a, b) = (cents[i], cents[j]);
                if (a[0] - b[0]).hypot(a[1] - b[1]) > max_h {
                    continue;
                }
                let union: Vec<Point> = groups[i].iter().chain(&groups[j]).map(|&k| points[k]).collect();
                let Some(r) = min_area_rect(&union) else { continue };
                let (short, long) = (r.w.min(r.h), r.w.max(r.h));
                if short <= max_w && long <= max_h {
                    let area = short * long;
                    if best.is_none_or(|(a, _, _)| area < a) {
                        best = Some((area, i, j));
                    }
                }
            }
        }
        let Some((_, i, j)) = best else { return groups };
        let moved = groups.swap_remove(j);
        groups[i].extend(moved);
    }
}

fn detect_on_grid(
    magnitude: &Array2<f64>,
    valid: Option<&Array2<bool>>,
    params: &BaselineParams,
    corners: impl Fn(usize, usize) -> [Point; 4],
) -> Result<Vec<OrientedBox>> {
    if !(params.link_distance > 0.0 && params.link_distance.is_finite()) {
        return Err(Error::InvalidParam("link_distance must be positive".into()));
    }
    let power = magnitude.mapv(|v| v * v);
    let peak = power.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(Vec::new());
    }
    let alpha = cfar_alpha(params.cfar.num_training(), params.cfar.pfa);
    let abs_floor = peak * 10f64.powf(-params.dynamic_range_db / 10.0);
    let cfar = CfarParams {
        min_noise: params.cfar.min_noise.max(abs_floor / alpha),
        ..params.cfar
    };
    let hits = match valid {
        Some(m) => ca_cfar_masked(power.view(), m.view(), &cfar)?,
        None => ca_cfar(power.view(), &cfar)?,
    };
    let cells: Vec<[Point; 4]> = hits.iter().map(|h| corners(h.row, h.col)).collect();
    let centres: Vec<Point> = cells
        .iter()
        .map(|c| {
            let x = c.iter().map(|p| p[0]).sum::<f64>() / 4.0;
            let y = c.iter().map(|p| p[1]).sum::<f64>() / 4.0;
            [x, y]
        })
        .collect();
    let noise = median(&power).max(peak * 1e-30);
    let mut boxes = Vec::new();
    let mut groups = clusters(&centres, params.link_distance);
    if let (Some(margin), Some((pw, ph))) = (params.merge_margin, params.size_prior) {
        groups = merge_fragments(groups, &centres, (pw + margin, ph + margin));
    }
    for members in groups {
        if members.len() < params.min_cells {
            continue;
        }
        let cell_power = |k: usize| power[(hits[k].row, hits[k].col)];
        let pts: Vec<Point> = members.iter().flat_map(|&k| cells[k]).collect();
        let fitted = match params.rect_fit {
            RectFit::MinArea => min_area_rect(&pts),
            RectFit::Closeness => {
                let cs: Vec<Point> = members.iter().map(|&k| centres[k]).collect();
                let ws: Vec<f64> = members.iter().map(|&k| cell_power(k).sqrt()).collect();
                closeness_rect(&cs, &ws, &pts)
            }
        };
        let Some(mut rect) = fitted else { continue };
        if !(rect.w > 0.0 && rect.h > 0.0) {
            continue;
        }
        if let Some(prior) = params.size_prior {
            rect = grow_to_prior(rect, prior, params.length_threshold);
        }
        let energy: f64 = members.iter().map(|&k| cell_power(k)).sum();
        let snr_db = 10.0 * (energy / noise).log10();
        let score = (snr_db / params.score_span_db).clamp(0.0, 1.0);
        rect.theta = normalize_angle(rect.theta);
        boxes.push(rect.with_score(score));
    }
    Ok(boxes)
}

/// Detects boxes on a BEV magnitude image. Empty images give no boxes.
pub fn baseline_detect_boxes(bev: &BevImage, params: &BaselineParams) -> Result<DetectionSet> {
    let half = 0.5 * bev.meters_per_pixel;
    // exact zeros mark pixels outside the sensor's coverage
    let valid = bev.values.mapv(|v| v > 0.0);
    let boxes = detect_on_grid(&bev.values, Some(&valid), params, |i, j| {
        let (x, y) = bev.pixel_center(i, j);
        [[x - half, y - half], [x + half, y - half], [x + half, y + half], [x - half, y + half]]
    })?;
    Ok(BoxSet::new(0, boxes))
}

/// Same detector run on a polar map; cluster cells are mapped to the sensor
/// frame before the rectangle fit.
pub fn baseline_detect_polar(map: &PolarMap, params: &BaselineParams) -> Result<DetectionSet> {
    let dr = 0.5 * map.range_bin_size();
    let da = 0.5 * map.azimuth_step();
    let boxes = detect_on_grid(&map.values, None, params, |i, j| {
        let r = map.range_of(i);
        let t = map.azimuth_of(j);
        let p = |r: f64, t: f64| [r * t.cos(), r * t.sin()];
        [p(r - dr, t - da), p(r + dr, t - da), p(r + dr, t + da), p(r - dr, t + da)]
    })?;
    Ok(BoxSet::new(0, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_respect_link_distance() {
        let p = [[1.0, 1.0], [1.5, 1.5], [2.3, 1.5], [9.0, 9.0]];
        assert_eq!(clusters(&p, 0.75), vec![vec![0, 1], vec![2], vec![3]]);
        assert_eq!(clusters(&p, 0.85), vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn long_face_grows_width_away_from_sensor() {
        let b = OrientedBox::new(10.0, 0.0, 0.3, 4.5, std::f64::consts::FRAC_PI_2);
        let g = grow_to_prior(b, (1.8, 4.5), 3.15);
        assert!((g.w - 1.8).abs() < 1e-12 && (g.h - 4.5).abs() < 1e-12);
        assert!((g.cx - 10.75).abs() < 1e-9, "{g:?}");
        assert!(g.cy.abs() < 1e-9);
    }

    #[test]
    fn short_face_becomes_width() {
        // 1.8 m face broadside at x = 10; the body extends to x = 14.5
        let b = OrientedBox::new(10.0, 0.0, 0.2, 1.8, std::f64::consts::FRAC_PI_2);
        let g = grow_to_prior(b, (1.8, 4.5), 3.15);
        assert!((g.w - 1.8).abs() < 1e-12 && (g.h - 4.5).abs() < 1e-12);
        assert!((g.cx - 12.15).abs() < 1e-9 && g.cy.abs() < 1e-9, "{g:?}");
        assert!(crate::types::angle_diff(g.theta, 0.0).abs() < 1e-9 || crate::types::angle_diff(g.theta, std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn large_rect_unchanged() {
        let b = OrientedBox::new(10.0, 3.0, 2.0, 5.0, 0.4);
        assert_eq!(grow_to_prior(b, (1.8, 4.5), 3.15), b);
    }

    #[test]
    fn empty_image_gives_empty_set() {
        let bev = BevImage {
            values: Array2::zeros((100, 100)),
            meters_per_pixel: 0.1,
            extent_forward: 10.0,
            extent_left: 5.0,
            extent_right: 5.0,
        };
        assert!(baseline_detect_boxes(&bev, &BaselineParams::default()).unwrap().is_empty());
    }
}
