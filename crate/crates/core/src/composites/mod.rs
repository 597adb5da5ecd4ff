//! RGB representations of Sentinel-1 and Sentinel-2 rasters and the patch
//! datasets cut from them.

mod augment;
mod patches;
mod raster;
mod rgb;
mod sar;

pub use augment::{augment, remap_box, Augmentation};
pub use patches::{
    crop_detection_patches, crop_grid, patch_count, CropSpec, DetectionPatch, ManifestEntry, Patch,
};
pub use raster::{load_raster, save_raster, sidecar_path, BandRaster, RasterSidecar};
pub use rgb::{load_png, save_png, RgbImage};
pub use sar::{
    percentile, s1_composite, s2_composite, ClipPercentiles, DEFAULT_CLIP_PERCENTILES,
    DEFAULT_REFLECTANCE_SCALE, RATIO_EPSILON,
};
