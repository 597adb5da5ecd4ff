//! Sentinel-1 dual-polarization and Sentinel-2 true colour composites.

use super::raster::BandRaster;
use super::rgb::RgbImage;
use crate::error::{Error, Result};

/// Guard on the VV denominator of the VH/VV ratio.
pub const RATIO_EPSILON: f64 = 1e-6;

pub const DEFAULT_CLIP_PERCENTILES: ClipPercentiles = ClipPercentiles {
    low: 2.0,
    high: 98.0,
};

pub const DEFAULT_REFLECTANCE_SCALE: f64 = 10000.0;

/// Lower and upper percentile used to stretch a SAR channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipPercentiles {
    pub low: f64,
    pub high: f64,
}

impl ClipPercentiles {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&low) || !(0.0..=100.0).contains(&high) || low >= high {
            return Err(Error::Input(format!(
                "clip percentiles must satisfy 0 <= low < high <= 100, got ({low}, {high})"
            )));
        }
        Ok(ClipPercentiles { low, high })
    }
}

impl Default for ClipPercentiles {
    fn default() -> Self {
        DEFAULT_CLIP_PERCENTILES
    }
}

/// Nearest-rank percentile of already sorted values.
///
/// Returns an actual sample, which keeps the stretch exactly scale invariant.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (p / 100.0 * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Percentile stretch to bytes. `None` cells stay 0 and do not enter the
/// percentiles; a zero-width range maps every valid cell to 128.
fn stretch(values: &[Option<f64>], clip: ClipPercentiles) -> Vec<u8> {
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    if sorted.is_empty() {
        return vec![0; values.len()];
    }
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, clip.low);
    let hi = percentile(&sorted, clip.high);
    values
        .iter()
        .map(|v| match v {
            None => 0,
            Some(_) if hi <= lo => 128,
            Some(x) => round_half_up((x.clamp(lo, hi) - lo) * 255.0 / (hi - lo)),
        })
        .collect()
}

fn interleave(width: usize, height: usize, r: &[u8], g: &[u8], b: &[u8]) -> RgbImage {
    let mut data = Vec::with_capacity(width * height * 3);
    for i in 0..width * height {
        data.extend_from_slice(&[r[i], g[i], b[i]]);
    }
    RgbImage {
        width,
        height,
        data,
    }
}

/// VH → red, VV → green, |VH|/|VV| → blue, each percentile-stretched.
///
/// Inputs are linear amplitudes. Pixels with nodata in either band are black.
pub fn s1_composite(vh: &BandRaster, vv: &BandRaster, clip: ClipPercentiles) -> Result<RgbImage> {
    if !vh.same_shape(vv) {
        return Err(Error::Input(format!(
            "VH is {}x{} but VV is {}x{}",
            vh.width, vh.height, vv.width, vv.height
        )));
    }
    let n = vh.width * vh.height;
    let mut red = Vec::with_capacity(n);
    let mut green = Vec::with_capacity(n);
    let mut blue = Vec::with_capacity(n);
    for i in 0..n {
        if vh.is_nodata(i) || vv.is_nodata(i) {
            red.push(None);
            green.push(None);
            blue.push(None);
            continue;
        }
        let h = (vh.values[i] as f64).abs();
        let v = (vv.values[i] as f64).abs();
        red.push(Some(h));
        green.push(Some(v));
        blue.push(Some(h / v.max(RATIO_EPSILON)));
    }
    Ok(interleave(
        vh.width,
        vh.height,
        &stretch(&red, clip),
        &stretch(&green, clip),
        &stretch(&blue, clip),
    ))
}

/// True colour: B04 → red, B03 → green, B02 → blue, `value / scale` clipped to `[0, 1]`.
pub fn s2_composite(
    b04: &BandRaster,
    b03: &BandRaster,
    b02: &BandRaster,
    reflectance_scale: f64,
) -> Result<RgbImage> {
    if !(b04.same_shape(b03) && b04.same_shape(b02)) {
        return Err(Error::Input(format!(
            "band dimensions differ: B04 {}x{}, B03 {}x{}, B02 {}x{}",
            b04.width, b04.height, b03.width, b03.height, b02.width, b02.height
        )));
    }
    if !(reflectance_scale > 0.0 && reflectance_scale.is_finite()) {
        return Err(Error::Input(format!(
            "reflectance scale must be positive, got {reflectance_scale}"
        )));
    }
    let to_byte = |v: f32| round_half_up(255.0 * (v as f64 / reflectance_scale).clamp(0.0, 1.0));
    let n = b04.width * b04.height;
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        if b04.is_nodata(i) || b03.is_nodata(i) || b02.is_nodata(i) {
            data.extend_from_slice(&[0, 0, 0]);
        } else {
            data.extend_from_slice(&[
                to_byte(b04.values[i]),
                to_byte(b03.values[i]),
                to_byte(b02.values[i]),
            ]);
        }
    }
    Ok(RgbImage {
        width: b04.width,
        height: b04.height,
        data,
    })
}
