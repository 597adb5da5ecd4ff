//! Axis-aligned boxes in normalized corner form, plus the detection and
//! ground-truth records that carry them.
//!
//! Everything inside the crate works on `[0, 1]` coordinates relative to the
//! image. Absolute COCO `[x, y, w, h]` pixels only appear at the file boundary,
//! through [`BBox::from_abs_xywh`] and [`BBox::to_abs_xywh`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized box, `x1 <= x2`, `y1 <= y2`, all coordinates in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box from two corners. Coordinates are clipped to `[0, 1]` and
    /// reordered so that the first corner is the top-left one.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        let (x1, x2) = (clip01(x1), clip01(x2));
        let (y1, y2) = (clip01(y1), clip01(y2));
        BBox {
            x1: x1.min(x2),
            y1: y1.min(y2),
            x2: x1.max(x2),
            y2: y1.max(y2),
        }
    }

    pub fn unit() -> Self {
        BBox::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() <= 0.0
    }

    /// Intersection over union. Zero whenever the union has no area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = self.x2.min(other.x2) - self.x1.max(other.x1);
        let ih = self.y2.min(other.y2) - self.y1.max(other.y1);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }

    /// Converts an absolute COCO `[x, y, w, h]` box to normalized corners.
    pub fn from_abs_xywh(x: f64, y: f64, w: f64, h: f64, img_w: f64, img_h: f64) -> Result<Self> {
        if !(img_w > 0.0 && img_h > 0.0) || !img_w.is_finite() || !img_h.is_finite() {
            return Err(Error::Input(format!(
                "image dimensions must be positive, got {img_w}x{img_h}"
            )));
        }
        if !(w >= 0.0 && h >= 0.0) || ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::Input(format!(
                "box [{x}, {y}, {w}, {h}] must be finite with non-negative extent"
            )));
        }
        Ok(BBox::new(
            x / img_w,
            y / img_h,
            (x + w) / img_w,
            (y + h) / img_h,
        ))
    }

    /// Inverse of [`BBox::from_abs_xywh`], returning `(x, y, w, h)` in pixels.
    pub fn to_abs_xywh(&self, img_w: f64, img_h: f64) -> Result<(f64, f64, f64, f64)> {
        if !(img_w > 0.0 && img_h > 0.0) {
            return Err(Error::Input(format!(
                "image dimensions must be positive, got {img_w}x{img_h}"
            )));
        }
        let x = self.x1 * img_w;
        let y = self.y1 * img_h;
        Ok((x, y, self.x2 * img_w - x, self.y2 * img_h - y))
    }
}

fn clip01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// One box predicted by a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub category_id: u64,
    pub image_id: u64,
    /// Index of the detector that produced the box.
    pub model_id: usize,
    /// Position in the source file; used for deterministic tie-breaking.
    pub source_index: usize,
}

/// One ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub category_id: u64,
    pub image_id: u64,
    pub annotation_id: u64,
}
