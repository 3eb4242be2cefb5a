//! Axis-aligned boxes in normalized `[0,1]` image coordinates.

use crate::error::{Error, Result};

/// `[x1, y1, x2, y2]` with `x1 < x2`, `y1 < y2`.
pub type Box4 = [f64; 4];

/// Validates box geometry.
pub fn validate_box(b: &Box4) -> Result<()> {
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::data(format!("box has non-finite coordinates: {b:?}")));
    }
    if b[0] >= b[2] || b[1] >= b[3] {
        return Err(Error::data(format!(
            "degenerate box: x1 < x2 and y1 < y2 required, got {b:?}"
        )));
    }
    Ok(())
}

/// Intersection-over-union of two boxes; 0 when disjoint.
pub fn iou(a: &Box4, b: &Box4) -> Result<f64> {
    validate_box(a)?;
    validate_box(b)?;
    Ok(iou_unchecked(a, b))
}

/// IoU without validity checks, for callers that construct valid boxes.
pub(crate) fn iou_unchecked(a: &Box4, b: &Box4) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let area_a = (a[2] - a[0]) * (a[3] - a[1]);
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    inter / (area_a + area_b - inter)
}
