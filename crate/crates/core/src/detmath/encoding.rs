use serde::{Deserialize, Serialize};

use super::anchors::Anchor;
use super::loss::{sigmoid, PRED_WIDTH};
use crate::error::{Error, Result};
use crate::types::{normalize_angle, OrientedBox};

/// Anchor-relative regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxEncoding {
    pub x_o: f64,
    pub y_o: f64,
    pub w_o: f64,
    pub h_o: f64,
    pub cos_theta_o: f64,
    pub sin_theta_o: f64,
}

impl BoxEncoding {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x_o, self.y_o, self.w_o, self.h_o, self.cos_theta_o, self.sin_theta_o]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        BoxEncoding {
            x_o: a[0],
            y_o: a[1],
            w_o: a[2],
            h_o: a[3],
            cos_theta_o: a[4],
            sin_theta_o: a[5],
        }
    }
}

fn check_anchor(a: &Anchor) -> Result<()> {
    if !(a.w > 0.0 && a.h > 0.0) {
        return Err(Error::DegenerateBox { w: a.w, h: a.h });
    }
    Ok(())
}

pub fn encode_box(anchor: &Anchor, gt: &OrientedBox) -> Result<BoxEncoding> {
    check_anchor(anchor)?;
    gt.validate()?;
    let d = normalize_angle(gt.theta - anchor.theta);
    Ok(BoxEncoding {
        x_o: (gt.cx - anchor.cx) / anchor.w,
        y_o: (gt.cy - anchor.cy) / anchor.h,
        w_o: (gt.w / anchor.w).ln(),
        h_o: (gt.h / anchor.h).ln(),
        cos_theta_o: d.cos(),
        sin_theta_o: d.sin(),
    })
}

/// Inverse of [`encode_box`]. The angular pair need not be unit-norm.
pub fn decode_box(anchor: &Anchor, enc: &BoxEncoding) -> Result<OrientedBox> {
    check_anchor(anchor)?;
    let v = enc.to_array();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParam("non-finite encoding".into()));
    }
    if enc.cos_theta_o == 0.0 && enc.sin_theta_o == 0.0 {
        return Err(Error::InvalidParam("angular pair is (0, 0)".into()));
    }
    let d = enc.sin_theta_o.atan2(enc.cos_theta_o);
    Ok(OrientedBox::new(
        anchor.cx + enc.x_o * anchor.w,
        anchor.cy + enc.y_o * anchor.h,
        anchor.w * enc.w_o.exp(),
        anchor.h * enc.h_o.exp(),
        anchor.theta + d,
    ))
}

/// Decodes one prediction row `[logit, 6 offsets, 6 log σ]` into a scored
/// box carrying per-parameter σ.
pub fn decode_prediction(anchor: &Anchor, row: &[f64]) -> Result<OrientedBox> {
    if row.len() != PRED_WIDTH {
        return Err(Error::ShapeMismatch(format!(
            "prediction row has {} values, expected {PRED_WIDTH}",
            row.len()
        )));
    }
    let mut offsets = [0.0; 6];
    offsets.copy_from_slice(&row[1..7]);
    let mut b = decode_box(anchor, &BoxEncoding::from_array(offsets))?;
    let mut sigma = [0.0; 6];
    for (s, l) in sigma.iter_mut().zip(&row[7..13]) {
        *s = l.exp();
    }
    b.score = Some(sigmoid(row[0]));
    b.variances = Some(sigma);
    Ok(b)
}
