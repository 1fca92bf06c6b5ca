//! Bounding boxes and the square-crop contract.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Axis-aligned box, `(x, y)` top-left corner, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// The larger of width and height, the scale used for smoothing and
    /// square crops.
    pub fn side(&self) -> f64 {
        self.w.max(self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.area() + b.area() - inter)
}

/// A square crop box plus the replicate padding a cropper must add on each
/// edge where the square leaves the image.
///
/// `pad` is `[left, top, right, bottom]` in pixels. Padding is recorded, not
/// applied: cropping happens wherever the pixels live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaddedBox {
    pub x: f64,
    pub y: f64,
    pub side: f64,
    pub pad: [f64; 4],
}

/// Turn a smoothed track into equal-sized square crops.
///
/// The side is the maximum of `max(w, h)` over the track's smoothed boxes,
/// so every frame of the track gets the same crop size, centered on the
/// smoothed center. `image` is the frame size used to compute padding; pass
/// `None` when the image extent is unknown, which records zero padding.
pub fn pad_boxes(
    smoothed: &[BoundingBox],
    image: Option<(u32, u32)>,
) -> Result<Vec<PaddedBox>> {
    if smoothed.is_empty() {
        return Err(Error::EmptyInput("pad_boxes needs at least one box"));
    }
    let side = smoothed.iter().map(BoundingBox::side).fold(0.0, f64::max);
    Ok(smoothed
        .iter()
        .map(|b| {
            let (cx, cy) = b.center();
            let x = cx - side / 2.0;
            let y = cy - side / 2.0;
            let pad = match image {
                Some((w, h)) => [
                    (-x).max(0.0),
                    (-y).max(0.0),
                    (x + side - w as f64).max(0.0),
                    (y + side - h as f64).max(0.0),
                ],
                None => [0.0; 4],
            };
            PaddedBox { x, y, side, pad }
        })
        .collect())
}
