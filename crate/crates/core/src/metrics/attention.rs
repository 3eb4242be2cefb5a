//! Attention accuracy over annotated caption positions.

use crate::metrics::bbox::{iou_unchecked, Box4};
use crate::metrics::grounding::IOU_THRESHOLD;

/// One annotated position: the region the attention picked and the region
/// the dataset aligns the word to, both indexing `boxes`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionCase {
    pub picked_region: usize,
    pub aligned_region: usize,
}

/// A pick is correct when its box overlaps the aligned box with IoU above
/// the localization threshold. Picking the aligned region itself is always
/// correct; a different region can still count if the boxes overlap enough.
pub fn attention_hit(case: &AttentionCase, boxes: &[Box4]) -> bool {
    let picked = &boxes[case.picked_region];
    let aligned = &boxes[case.aligned_region];
    iou_unchecked(picked, aligned) > IOU_THRESHOLD || case.picked_region == case.aligned_region
}

/// Fraction of annotated positions whose pick is correct. Empty input is
/// reported as zero accuracy rather than an error.
pub fn attention_accuracy(cases: &[(AttentionCase, &[Box4])]) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    let hits = cases
        .iter()
        .filter(|(case, boxes)| attention_hit(case, boxes))
        .count();
    hits as f64 / cases.len() as f64
}
