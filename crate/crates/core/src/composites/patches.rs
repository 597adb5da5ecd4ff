//! Fixed-grid patch extraction, optionally carrying ground-truth boxes along.

use serde::{Deserialize, Serialize};

use super::rgb::RgbImage;
use crate::error::{Error, Result};
use crate::geometry::{Annotation, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub patch_size: usize,
    pub stride: usize,
    /// Minimum fraction of a box's area that must fall inside a patch.
    pub min_box_visibility: f64,
}

impl CropSpec {
    /// Non-overlapping patches with the default visibility of 0.5.
    pub fn new(patch_size: usize) -> Result<Self> {
        Self::with_stride(patch_size, patch_size, 0.5)
    }

    pub fn with_stride(patch_size: usize, stride: usize, min_box_visibility: f64) -> Result<Self> {
        let spec = CropSpec {
            patch_size,
            stride,
            min_box_visibility,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::Input("patch size must be positive".into()));
        }
        if self.stride == 0 || self.stride > self.patch_size {
            return Err(Error::Input(format!(
                "stride must lie in [1, {}], got {}",
                self.patch_size, self.stride
            )));
        }
        if !(self.min_box_visibility > 0.0 && self.min_box_visibility <= 1.0) {
            return Err(Error::Input(format!(
                "minimum box visibility must lie in (0, 1], got {}",
                self.min_box_visibility
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub image: RgbImage,
    pub origin_x: usize,
    pub origin_y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionPatch {
    pub image: RgbImage,
    pub origin_x: usize,
    pub origin_y: usize,
    /// Boxes in patch-normalized coordinates; ids are those of the source annotations.
    pub annotations: Vec<Annotation>,
}

/// One line of a patch manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file_name: String,
    pub origin_x: usize,
    pub origin_y: usize,
    pub source: String,
}

/// Number of patches that fit along both axes.
pub fn patch_count(width: usize, height: usize, spec: &CropSpec) -> usize {
    let along = |len: usize| {
        if len < spec.patch_size {
            0
        } else {
            (len - spec.patch_size) / spec.stride + 1
        }
    };
    along(width) * along(height)
}

fn origins(img: &RgbImage, spec: &CropSpec) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    if img.width < spec.patch_size || img.height < spec.patch_size {
        return Err(Error::Input(format!(
            "{}x{} image is smaller than the {} px patch size",
            img.width, img.height, spec.patch_size
        )));
    }
    let xs: Vec<usize> = (0..=img.width - spec.patch_size)
        .step_by(spec.stride)
        .collect();
    Ok((0..=img.height - spec.patch_size)
        .step_by(spec.stride)
        .flat_map(|y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

/// Cuts full patches row by row; remainders at the right and bottom edges are dropped.
pub fn crop_grid(img: &RgbImage, spec: &CropSpec) -> Result<Vec<Patch>> {
    Ok(origins(img, spec)?
        .into_iter()
        .map(|(x, y)| Patch {
            image: img.crop(x, y, spec.patch_size, spec.patch_size),
            origin_x: x,
            origin_y: y,
        })
        .collect())
}

/// Cuts patches and keeps only those containing at least one sufficiently
/// visible box. `annotations` are normalized to `img`.
pub fn crop_detection_patches(
    img: &RgbImage,
    annotations: &[Annotation],
    spec: &CropSpec,
) -> Result<Vec<DetectionPatch>> {
    let (w, h) = (img.width as f64, img.height as f64);
    let size = spec.patch_size as f64;
    let mut out = Vec::new();
    for (ox, oy) in origins(img, spec)? {
        let (px1, py1) = (ox as f64, oy as f64);
        let (px2, py2) = (px1 + size, py1 + size);
        let kept: Vec<Annotation> = annotations
            .iter()
            .filter_map(|a| {
                let (x1, y1, x2, y2) = (a.bbox.x1 * w, a.bbox.y1 * h, a.bbox.x2 * w, a.bbox.y2 * h);
                let area = (x2 - x1) * (y2 - y1);
                let (cx1, cy1, cx2, cy2) = (x1.max(px1), y1.max(py1), x2.min(px2), y2.min(py2));
                if area <= 0.0 || cx2 <= cx1 || cy2 <= cy1 {
                    return None;
                }
                let visible = (cx2 - cx1) * (cy2 - cy1) / area;
                (visible >= spec.min_box_visibility).then(|| Annotation {
                    bbox: BBox::new(
                        (cx1 - px1) / size,
                        (cy1 - py1) / size,
                        (cx2 - px1) / size,
                        (cy2 - py1) / size,
                    ),
                    ..a.clone()
                })
            })
            .collect();
        if !kept.is_empty() {
            out.push(DetectionPatch {
                image: img.crop(ox, oy, spec.patch_size, spec.patch_size),
                origin_x: ox,
                origin_y: oy,
                annotations: kept,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(id: u64, bbox: BBox) -> Annotation {
        Annotation {
            bbox,
            category_id: 1,
            image_id: 1,
            annotation_id: id,
        }
    }

    #[test]
    fn grid_examples() {
        let spec = CropSpec::new(600).unwrap();
        let patches = crop_grid(&RgbImage::filled(1200, 1200, [1, 2, 3]), &spec).unwrap();
        let origins: Vec<(usize, usize)> =
            patches.iter().map(|p| (p.origin_x, p.origin_y)).collect();
        assert_eq!(origins, vec![(0, 0), (600, 0), (0, 600), (600, 600)]);

        let one = crop_grid(&RgbImage::filled(600, 600, [0; 3]), &spec).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].origin_x, one[0].origin_y), (0, 0));

        assert!(crop_grid(&RgbImage::filled(599, 600, [0; 3]), &spec).is_err());
    }

    #[test]
    fn patches_copy_the_right_pixels() {
        let mut img = RgbImage::filled(4, 4, [0; 3]);
        img.set_pixel(3, 2, [9, 9, 9]);
        let spec = CropSpec::with_stride(2, 1, 0.5).unwrap();
        let patches = crop_grid(&img, &spec).unwrap();
        assert_eq!(patches.len(), 9);
        let p = patches
            .iter()
            .find(|p| (p.origin_x, p.origin_y) == (2, 1))
            .unwrap();
        assert_eq!(p.image.pixel(1, 1), [9, 9, 9]);
    }

    #[test]
    fn spec_validation() {
        assert!(CropSpec::new(0).is_err());
        assert!(CropSpec::with_stride(10, 11, 0.5).is_err());
        assert!(CropSpec::with_stride(10, 0, 0.5).is_err());
        assert!(CropSpec::with_stride(10, 5, 0.0).is_err());
        assert!(CropSpec::with_stride(10, 5, 1.0).is_ok());
    }

    #[test]
    fn single_box_single_patch() {
        let img = RgbImage::filled(1200, 1200, [0; 3]);
        // Pixels 700..800 in x, 100..200 in y: inside the patch at (600, 0).
        let a = ann(
            5,
            BBox::new(
                700.0 / 1200.0,
                100.0 / 1200.0,
                800.0 / 1200.0,
                200.0 / 1200.0,
            ),
        );
        let out = crop_detection_patches(&img, &[a], &CropSpec::new(600).unwrap()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].origin_x, out[0].origin_y), (600, 0));
        let b = out[0].annotations[0].bbox;
        for (got, want) in [
            (b.x1, 100.0 / 600.0),
            (b.y1, 100.0 / 600.0),
            (b.x2, 200.0 / 600.0),
            (b.y2, 200.0 / 600.0),
        ] {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(out[0].annotations[0].annotation_id, 5);
    }

    #[test]
    fn straddling_box_kept_in_both_halves() {
        let img = RgbImage::filled(1200, 600, [0; 3]);
        let a = ann(1, BBox::new(550.0 / 1200.0, 0.1, 650.0 / 1200.0, 0.2));
        let out =
            crop_detection_patches(&img, std::slice::from_ref(&a), &CropSpec::new(600).unwrap())
                .unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[0].annotations[0].bbox.x1 - 550.0 / 600.0).abs() < 1e-12);
        assert_eq!(out[0].annotations[0].bbox.x2, 1.0);
        assert_eq!(out[1].annotations[0].bbox.x1, 0.0);

        let strict = CropSpec::with_stride(600, 600, 0.6).unwrap();
        assert!(crop_detection_patches(&img, &[a], &strict)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn no_boxes_no_patches() {
        let img = RgbImage::filled(1200, 1200, [0; 3]);
        assert!(
            crop_detection_patches(&img, &[], &CropSpec::new(600).unwrap())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn count_formula() {
        let spec = CropSpec::with_stride(600, 300, 0.5).unwrap();
        assert_eq!(patch_count(1200, 900, &spec), 3 * 2);
        assert_eq!(patch_count(599, 900, &spec), 0);
    }
}
