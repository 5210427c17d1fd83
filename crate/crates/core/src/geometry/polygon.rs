use crate::error::{Error, Result};
use crate::types::{normalize_angle, OrientedBox};

pub type Point = [f64; 2];

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    /// Checks orientation and convexity (up to 1e-12).
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidParam(format!(
                "polygon needs >= 3 vertices, got {}",
                vertices.len()
            )));
        }
        let n = vertices.len();
        for i in 0..n {
            let c = cross(vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if c < -1e-12 {
                return Err(Error::InvalidParam(
                    "polygon is not convex counter-clockwise".into(),
                ));
            }
        }
        Ok(ConvexPolygon { vertices })
    }

    pub(crate) fn from_vertices_unchecked(vertices: Vec<Point>) -> Self {
        ConvexPolygon { vertices }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    /// Sutherland-Hodgman clip of `self` against the convex `clip` polygon.
    pub fn clip(&self, clip: &ConvexPolygon) -> Vec<Point> {
        let mut output = self.vertices.clone();
        let m = clip.vertices.len();
        for i in 0..m {
            if output.is_empty() {
                break;
            }
            let a = clip.vertices[i];
            let b = clip.vertices[(i + 1) % m];
            let input = std::mem::take(&mut output);
            let n = input.len();
            for j in 0..n {
                let p = input[j];
                let q = input[(j + 1) % n];
                let dp = cross(a, b, p);
                let dq = cross(a, b, q);
                if dp >= 0.0 {
                    output.push(p);
                    if dq < 0.0 {
                        output.push(intersect(p, q, dp, dq));
                    }
                } else if dq >= 0.0 {
                    output.push(intersect(p, q, dp, dq));
                }
            }
        }
        output
    }

    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], p) >= -1e-12)
    }
}

fn intersect(p: Point, q: Point, dp: f64, dq: f64) -> Point {
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

pub(crate) fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    0.5 * twice
}

/// Four CCW corners: h along the heading, w across it.
pub fn box_to_polygon(b: &OrientedBox) -> ConvexPolygon {
    let (s, c) = b.theta.sin_cos();
    let (hu, hv) = (0.5 * b.h, 0.5 * b.w);
    let corner = |su: f64, sv: f64| {
        [
            b.cx + su * hu * c - sv * hv * s,
            b.cy + su * hu * s + sv * hv * c,
        ]
    };
    ConvexPolygon::from_vertices_unchecked(vec![
        corner(-1.0, -1.0),
        corner(1.0, -1.0),
        corner(1.0, 1.0),
        corner(-1.0, 1.0),
    ])
}

/// Euclidean distance from `p` to the polygon boundary.
pub fn point_polygon_distance(poly: &ConvexPolygon, p: Point) -> f64 {
    let v = poly.vertices();
    let n = v.len();
    (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let ap = [p[0] - a[0], p[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len2 > 0.0 {
                ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
            d[0].hypot(d[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Andrew's monotone chain. Returns CCW hull without collinear points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle of a point set, found by trying every
/// hull edge as a rectangle side (rotating calipers). The longer side becomes
/// the heading (`h`).
pub fn min_area_rect(points: &[Point]) -> Option<OrientedBox> {
    let hull = convex_hull(points);
    match hull.len() {
        0 => return None,
        1 | 2 => {
            let a = hull[0];
            let b = *hull.last().unwrap();
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            return Some(OrientedBox::new(
                0.5 * (a[0] + b[0]),
                0.5 * (a[1] + b[1]),
                0.0,
                len,
                dy.atan2(dx),
            ));
        }
        _ => {}
    }
    let n = hull.len();
    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len == 0.0 {
            continue;
        }
        let u = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        let v = [-u[1], u[0]];
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let pu = p[0] * u[0] + p[1] * u[1];
            let pv = p[0] * v[0] + p[1] * v[1];
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let area = (umax - umin) * (vmax - vmin);
        if best.as_ref().is_none_or(|(a, _)| area < *a - 1e-15) {
            let cu = 0.5 * (umin + umax);
            let cv = 0.5 * (vmin + vmax);
            let cx = cu * u[0] + cv * v[0];
            let cy = cu * u[1] + cv * v[1];
            let (lu, lv) = (umax - umin, vmax - vmin);
            let rect = if lu >= lv {
                OrientedBox::new(cx, cy, lv, lu, u[1].atan2(u[0]))
            } else {
                OrientedBox::new(cx, cy, lu, lv, v[1].atan2(v[0]))
            };
            best = Some((area, rect));
        }
    }
    best.map(|(_, r)| OrientedBox {
        theta: normalize_angle(r.theta),
        ..r
    })
}
