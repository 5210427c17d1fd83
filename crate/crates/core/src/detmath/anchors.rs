use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl Anchor {
    pub fn as_box(&self) -> OrientedBox {
        OrientedBox::new(self.cx, self.cy, self.w, self.h, self.theta)
    }
}

/// Rows run along +x and columns along +y, starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub grid_shape: (usize, usize),
    pub cell_size: f64,
    pub origin: (f64, f64),
    pub anchor_size: (f64, f64),
    pub anchor_orientations: [f64; 3],
}

impl Default for AnchorConfig {
    /// 15 × 42 px at 0.1 m/px; orientations 30°, 115°, 136°.
    fn default() -> Self {
        AnchorConfig {
            grid_shape: (8, 8),
            cell_size: 1.0,
            origin: (0.0, 0.0),
            anchor_size: (1.5, 4.2),
            anchor_orientations: [30f64.to_radians(), 115f64.to_radians(), 136f64.to_radians()],
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.anchor_size;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidConfig(format!("anchor size ({w}, {h}) must be positive")));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidConfig("cell_size must be positive".into()));
        }
        if self.anchor_orientations.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("anchor orientations must be finite".into()));
        }
        Ok(())
    }
}

/// Anchors ordered by (row, col, orientation).
pub fn build_anchor_grid(config: &AnchorConfig) -> Result<Vec<Anchor>> {
    config.validate()?;
    let (rows, cols) = config.grid_shape;
    let mut out = Vec::with_capacity(rows * cols * 3);
    for r in 0..rows {
        for c in 0..cols {
            let cx = config.origin.0 + (r as f64 + 0.5) * config.cell_size;
            let cy = config.origin.1 + (c as f64 + 0.5) * config.cell_size;
            for &theta in &config.anchor_orientations {
                out.push(Anchor {
                    cx,
                    cy,
                    w: config.anchor_size.0,
                    h: config.anchor_size.1,
                    theta,
                });
            }
        }
    }
    Ok(out)
}

pub fn mean_anchor_size(boxes: &[OrientedBox]) -> Result<(f64, f64)> {
    if boxes.is_empty() {
        return Err(Error::Empty("mean anchor size needs at least one box".into()));
    }
    let n = boxes.len() as f64;
    let (sw, sh) = boxes.iter().fold((0.0, 0.0), |(a, b), x| (a + x.w, b + x.h));
    Ok((sw / n, sh / n))
}
