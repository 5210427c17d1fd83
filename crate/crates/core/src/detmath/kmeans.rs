use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{normalize_angle, OrientedBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams { k: 3, restarts: 10, max_iters: 100, seed: 0 }
    }
}

/// Orientation distance modulo π: boxes are unchanged by a half turn.
pub fn orientation_distance(a: f64, b: f64) -> f64 {
    0.5 * normalize_angle(2.0 * (a - b)).abs()
}

/// Circular mean of angles with period π, in [0, π).
fn circular_mean(angles: &[f64]) -> Option<f64> {
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + (2.0 * a).sin(), c + (2.0 * a).cos()));
    if s.hypot(c) < 1e-12 * angles.len() as f64 {
        return None;
    }
    Some((0.5 * s.atan2(c)).rem_euclid(PI))
}

fn nearest(a: f64, centroids: &[f64]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, &c)| (i, orientation_distance(a, c)))
        .fold((0, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best })
}

fn plus_plus_init(angles: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = vec![angles[rng.random_range(0..angles.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = angles.iter().map(|&a| nearest(a, &centroids).1.powi(2)).collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // fewer distinct angles than k; duplicates are harmless
            centroids.push(angles[rng.random_range(0..angles.len())]);
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = angles.len() - 1;
        for (i, w) in d2.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        centroids.push(angles[pick]);
    }
    centroids
}

fn lloyd(angles: &[f64], mut centroids: Vec<f64>, max_iters: usize) -> (Vec<f64>, f64) {
    let mut labels = vec![usize::MAX; angles.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for (l, &a) in labels.iter_mut().zip(angles) {
            let (j, _) = nearest(a, &centroids);
            changed |= *l != j;
            *l = j;
        }
        if !changed {
            break;
        }
        for (j, c) in centroids.iter_mut().enumerate() {
            let members: Vec<f64> = angles
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == j)
                .map(|(&a, _)| a)
                .collect();
            if let Some(m) = circular_mean(&members) {
                *c = m;
            }
        }
    }
    let inertia = angles.iter().map(|&a| nearest(a, &centroids).1.powi(2)).sum();
    (centroids, inertia)
}

/// k-means over box headings with the period-π distance. Centroids are
/// returned in [0, π), sorted ascending; the best of `restarts` seeded runs
/// by inertia wins.
pub fn kmeans_orientations(boxes: &[OrientedBox], params: &KmeansParams) -> Result<Vec<f64>> {
    let k = params.k;
    if k == 0 || params.restarts == 0 {
        return Err(Error::InvalidParam("k and restarts must be at least 1".into()));
    }
    if boxes.len() < k {
        return Err(Error::Empty(format!("{} boxes for k = {k}", boxes.len())));
    }
    let angles: Vec<f64> = boxes.iter().map(|b| b.theta.rem_euclid(PI)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..params.restarts {
        let init = plus_plus_init(&angles, k, &mut rng);
        let (c, inertia) = lloyd(&angles, init, params.max_iters);
        if best.as_ref().is_none_or(|b| inertia < b.1) {
            best = Some((c, inertia));
        }
    }
    let mut c = best.map(|b| b.0).unwrap_or_default();
    for x in &mut c {
        *x = x.rem_euclid(PI);
    }
    c.sort_by(f64::total_cmp);
    Ok(c)
}
