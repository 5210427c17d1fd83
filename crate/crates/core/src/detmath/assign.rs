use super::anchors::Anchor;
use crate::error::{Error, Result};
use crate::geometry::box_iou;
use crate::types::OrientedBox;

/// One anchor per ground-truth box and one box per anchor.
///
/// Candidate (gt, anchor) pairs are taken greedily in order of IoU desc,
/// centre distance asc, anchor index asc, gt index asc; a pair is accepted
/// when both sides are still free. A gt whose IoU is zero everywhere thus
/// lands on its nearest free anchor. Entries are `None` only when there are
/// more gts than anchors.
pub fn assign_targets(anchors: &[Anchor], gts: &[OrientedBox]) -> Result<Vec<Option<usize>>> {
    if anchors.is_empty() {
        return Err(Error::Empty("no anchors to assign to".into()));
    }
    for g in gts {
        g.validate()?;
    }
    let anchor_boxes: Vec<OrientedBox> = anchors.iter().map(Anchor::as_box).collect();
    let mut pairs = Vec::with_capacity(gts.len() * anchors.len());
    for (gi, g) in gts.iter().enumerate() {
        for (ai, a) in anchor_boxes.iter().enumerate() {
            let iou = box_iou(g, a);
            let dist = (g.cx - a.cx).hypot(g.cy - a.cy);
            pairs.push((iou, dist, ai, gi));
        }
    }
    pairs.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(x.1.total_cmp(&y.1))
            .then(x.2.cmp(&y.2))
            .then(x.3.cmp(&y.3))
    });
    let mut taken = vec![false; anchors.len()];
    let mut out = vec![None; gts.len()];
    let mut remaining = gts.len().min(anchors.len());
    for (_, _, ai, gi) in pairs {
        if remaining == 0 {
            break;
        }
        if out[gi].is_none() && !taken[ai] {
            out[gi] = Some(ai);
            taken[ai] = true;
            remaining -= 1;
        }
    }
    Ok(out)
}
