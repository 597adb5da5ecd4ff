//! Dihedral augmentations applied identically to pixels and boxes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::rgb::RgbImage;
use crate::error::{Error, Result};
use crate::geometry::{Annotation, BBox};

/// Rotations are clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    FlipH,
    FlipV,
    Rot90,
    Rot180,
    Rot270,
}

impl Augmentation {
    pub const ALL: [Augmentation; 5] = [
        Augmentation::FlipH,
        Augmentation::FlipV,
        Augmentation::Rot90,
        Augmentation::Rot180,
        Augmentation::Rot270,
    ];

    fn is_rotation(self) -> bool {
        matches!(
            self,
            Augmentation::Rot90 | Augmentation::Rot180 | Augmentation::Rot270
        )
    }

    /// Where a normalized point `(u, v)` lands.
    fn map_point(self, u: f64, v: f64) -> (f64, f64) {
        match self {
            Augmentation::FlipH => (1.0 - u, v),
            Augmentation::FlipV => (u, 1.0 - v),
            Augmentation::Rot90 => (1.0 - v, u),
            Augmentation::Rot180 => (1.0 - u, 1.0 - v),
            Augmentation::Rot270 => (v, 1.0 - u),
        }
    }

    /// Source pixel for destination pixel `(x, y)` of a `w`×`h` input.
    fn source_pixel(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        match self {
            Augmentation::FlipH => (w - 1 - x, y),
            Augmentation::FlipV => (x, h - 1 - y),
            Augmentation::Rot90 => (y, h - 1 - x),
            Augmentation::Rot180 => (w - 1 - x, h - 1 - y),
            Augmentation::Rot270 => (w - 1 - y, x),
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Augmentation::FlipH => "flip_h",
            Augmentation::FlipV => "flip_v",
            Augmentation::Rot90 => "rot90",
            Augmentation::Rot180 => "rot180",
            Augmentation::Rot270 => "rot270",
        })
    }
}

impl FromStr for Augmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Augmentation::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Input(format!("unknown augmentation {s:?}")))
    }
}

pub fn remap_box(b: &BBox, op: Augmentation) -> BBox {
    let (u1, v1) = op.map_point(b.x1, b.y1);
    let (u2, v2) = op.map_point(b.x2, b.y2);
    BBox::new(u1, v1, u2, v2)
}

fn transform_pixels(img: &RgbImage, op: Augmentation) -> RgbImage {
    let (w, h) = (img.width, img.height);
    let (out_w, out_h) = if matches!(op, Augmentation::Rot90 | Augmentation::Rot270) {
        (h, w)
    } else {
        (w, h)
    };
    let mut out = RgbImage {
        width: out_w,
        height: out_h,
        data: vec![0; out_w * out_h * 3],
    };
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = op.source_pixel(x, y, w, h);
            out.set_pixel(x, y, img.pixel(sx, sy));
        }
    }
    out
}

/// Applies `ops` in order to the patch and its boxes.
pub fn augment(
    patch: &RgbImage,
    annotations: &[Annotation],
    ops: &[Augmentation],
) -> Result<(RgbImage, Vec<Annotation>)> {
    if patch.width != patch.height && ops.iter().any(|op| op.is_rotation()) {
        return Err(Error::Input(format!(
            "rotations need a square patch, got {}x{}",
            patch.width, patch.height
        )));
    }
    let mut img = patch.clone();
    let mut boxes = annotations.to_vec();
    for &op in ops {
        img = transform_pixels(&img, op);
        for a in &mut boxes {
            a.bbox = remap_box(&a.bbox, op);
        }
    }
    Ok((img, boxes))
}
