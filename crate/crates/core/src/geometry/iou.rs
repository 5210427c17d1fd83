use super::polygon::{box_to_polygon, shoelace};
use crate::error::Result;
use crate::types::OrientedBox;

/// Intersection areas below this are treated as empty.
const AREA_EPS: f64 = 1e-12;

/// Exact oriented IoU via convex clipping. Fails on degenerate boxes.
pub fn oriented_iou(a: &OrientedBox, b: &OrientedBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(box_iou(a, b))
}

/// Oriented IoU of boxes already known to be valid.
pub fn box_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    // cheap reject on circumscribed circles
    let ra = 0.5 * a.w.hypot(a.h);
    let rb = 0.5 * b.w.hypot(b.h);
    let d = (a.cx - b.cx).hypot(a.cy - b.cy);
    if d >= ra + rb {
        return 0.0;
    }
    let pa = box_to_polygon(a);
    let pb = box_to_polygon(b);
    let inter = shoelace(&pa.clip(&pb));
    if inter < AREA_EPS {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
