use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single band on a row-major grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub nodata: Option<f32>,
}

/// JSON document describing a raw raster file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodata: Option<f32>,
}

impl BandRaster {
    pub fn new(width: usize, height: usize, values: Vec<f32>, nodata: Option<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if width.checked_mul(height) != Some(values.len()) {
            return Err(Error::Input(format!(
                "{width}x{height} raster needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(BandRaster {
            width,
            height,
            values,
            nodata,
        })
    }

    /// NaN cells and cells equal to the declared nodata value.
    pub fn is_nodata(&self, idx: usize) -> bool {
        let v = self.values[idx];
        v.is_nan() || self.nodata.is_some_and(|nd| v == nd)
    }

    pub fn same_shape(&self, other: &BandRaster) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Sidecar location for a raw data file: `<data>.json`.
pub fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Reads little-endian `f32` samples plus their JSON sidecar.
pub fn load_raster(data_path: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<BandRaster> {
    let (data_path, sidecar) = (data_path.as_ref(), sidecar.as_ref());
    let meta_text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: RasterSidecar =
        serde_json::from_str(&meta_text).map_err(|e| Error::format(sidecar, e))?;
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;

    let expected = meta
        .width
        .checked_mul(meta.height)
        .and_then(|n| n.checked_mul(4));
    if meta.width == 0 || meta.height == 0 || expected != Some(bytes.len()) {
        return Err(Error::format(
            data_path,
            format!(
                "sidecar declares {}x{} samples ({} bytes) but the file has {} bytes",
                meta.width,
                meta.height,
                meta.width * meta.height * 4,
                bytes.len()
            ),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    BandRaster::new(meta.width, meta.height, values, meta.nodata)
}

/// Writes the raw samples and the sidecar next to them.
pub fn save_raster(raster: &BandRaster, data_path: impl AsRef<Path>) -> Result<()> {
    let data_path = data_path.as_ref();
    let bytes: Vec<u8> = raster.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))?;
    let meta = RasterSidecar {
        width: raster.width,
        height: raster.height,
        nodata: raster.nodata,
    };
    let side = sidecar_path(data_path);
    fs::write(
        &side,
        serde_json::to_string(&meta).expect("sidecar serializes"),
    )
    .map_err(|e| Error::io(&side, e))
}
