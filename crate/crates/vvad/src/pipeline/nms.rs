//! Non-maxima suppression for face detections.

use super::boxes::{iou, BoundingBox};
use serde::{Deserialize, Serialize};

/// A detector output box with its confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl Detection {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox { x: self.x, y: self.y, w: self.w, h: self.h }
    }
}

/// Greedy non-maxima suppression.
///
/// Repeatedly keeps the highest-scored remaining box and removes every box
/// whose IoU with it exceeds `iou_threshold`. Score ties break toward the
/// earlier input index, which makes the result deterministic. Output comes
/// back sorted by score descending.
pub fn nms(boxes: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b))
    });

    let mut suppressed = vec![false; boxes.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(boxes[i]);
        for &j in &order[rank + 1..] {
            if !suppressed[j] && iou(&boxes[i].bbox(), &boxes[j].bbox()) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}
