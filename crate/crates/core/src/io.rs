//! File formats: the RTD tensor container, 16-bit PGM renders and JSON-lines
//! box records.
//!
//! RTD layout (little-endian):
//!
//! ```text
//! offset 0   b"RTD1"
//! offset 4   u8 dtype   (0 = f32, 1 = complex f32 interleaved re, im)
//! offset 5   u8 ndim
//! offset 6   2 zero bytes of padding
//! offset 8   ndim x u64 dims
//! ...        row-major payload
//! ```

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::types::{BevImage, BoxSet, MapFormat, OrientedBox, PolarMap, RadarCube};

pub const RTD_MAGIC: [u8; 4] = *b"RTD1";
const MAX_DIM: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    Complex32(Vec<Complex32>),
}

impl TensorData {
    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::Complex32(_) => 1,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::Complex32(v) => v.len(),
        }
    }
}

/// Dense row-major tensor as stored in an RTD file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_cube(cube: &RadarCube) -> Self {
        let (a, b, c) = cube.data.dim();
        Tensor {
            shape: vec![a, b, c],
            data: TensorData::Complex32(cube.data.iter().copied().collect()),
        }
    }

    pub fn from_array2(values: &Array2<f64>) -> Self {
        Tensor {
            shape: vec![values.nrows(), values.ncols()],
            data: TensorData::F32(values.iter().map(|&v| v as f32).collect()),
        }
    }

    pub fn to_cube(&self, config: &RadarConfig) -> Result<RadarCube> {
        let TensorData::Complex32(data) = &self.data else {
            return Err(Error::ShapeMismatch("radar cube must be complex".into()));
        };
        if self.shape.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "radar cube must be 3-D, got {:?}",
                self.shape
            )));
        }
        let arr = Array3::from_shape_vec(
            (self.shape[0], self.shape[1], self.shape[2]),
            data.clone(),
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        RadarCube::new(arr, config.clone())
    }

    pub fn to_array2(&self) -> Result<Array2<f64>> {
        let TensorData::F32(data) = &self.data else {
            return Err(Error::ShapeMismatch("expected a real tensor".into()));
        };
        if self.shape.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "expected a 2-D tensor, got {:?}",
                self.shape
            )));
        }
        Array2::from_shape_vec(
            (self.shape[0], self.shape[1]),
            data.iter().map(|&v| v as f64).collect(),
        )
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }
}

pub fn encode_tensor(tensor: &Tensor) -> Result<Vec<u8>> {
    let ndim = u8::try_from(tensor.shape.len())
        .map_err(|_| Error::InvalidParam(format!("{} dimensions", tensor.shape.len())))?;
    let mut out = Vec::with_capacity(8 + 8 * tensor.shape.len() + 8 * tensor.data.len());
    out.extend_from_slice(&RTD_MAGIC);
    out.push(tensor.data.dtype());
    out.push(ndim);
    out.extend_from_slice(&[0, 0]);
    for &d in &tensor.shape {
        let d = d as u64;
        if d > MAX_DIM {
            return Err(Error::DimensionOverflow(d));
        }
        out.extend_from_slice(&d.to_le_bytes());
    }
    match &tensor.data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::Complex32(v) => v.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != RTD_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let dtype = bytes[4];
    let ndim = bytes[5] as usize;
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 8 + 8 * i;
        let d = u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
        if d > MAX_DIM {
            return Err(Error::DimensionOverflow(d));
        }
        shape.push(d as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::DimensionOverflow(u64::MAX))?;
    let elem = match dtype {
        0 => 4,
        1 => 8,
        other => return Err(Error::UnsupportedDtype(other)),
    };
    let expected = header + n * elem;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[header..];
    let f = |i: usize| f32::from_le_bytes(payload[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let data = match dtype {
        0 => TensorData::F32((0..n).map(f).collect()),
        _ => TensorData::Complex32((0..n).map(|i| Complex32::new(f(2 * i), f(2 * i + 1))).collect()),
    };
    Ok(Tensor { shape, data })
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(tensor)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

/// Renders a real 2-D grid as a 16-bit binary PGM.
///
/// Values are min-max normalized to `[0, 1]`, raised to `gamma`, and scaled
/// to `0..=65535`. A constant image maps to all zeros.
pub fn encode_pgm(values: ArrayView2<f64>, gamma: f64) -> Result<Vec<u8>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParam(format!("gamma must be > 0, got {gamma}")));
    }
    if values.is_empty() {
        return Err(Error::Empty("cannot render an empty image".into()));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n65535\n", values.ncols(), values.nrows()).into_bytes();
    for &v in values.iter() {
        let n = if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        let px = (n.powf(gamma) * 65535.0).round() as u16;
        out.extend_from_slice(&px.to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, values: ArrayView2<f64>, gamma: f64) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(values, gamma)?)
}

/// Polar maps render with far range at the top, like a range-azimuth plot.
pub fn polar_render_view(map: &PolarMap) -> Array2<f64> {
    let mut v = map.values.clone();
    v.invert_axis(ndarray::Axis(0));
    v
}

/// Metadata written next to every RTD map/image so consumers can tell polar
/// maps from BEV images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridMeta {
    Polar {
        format: MapFormat,
        range_extent: f64,
        azimuth_extent: f64,
    },
    Bev {
        meters_per_pixel: f64,
        extent_forward: f64,
        extent_left: f64,
        extent_right: f64,
    },
}

pub fn meta_path(tensor_path: &Path) -> PathBuf {
    let mut p = tensor_path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub fn write_polar(path: impl AsRef<Path>, map: &PolarMap) -> Result<()> {
    let path = path.as_ref();
    write_tensor(path, &Tensor::from_array2(&map.values))?;
    let meta = GridMeta::Polar {
        format: map.format,
        range_extent: map.range_extent,
        azimuth_extent: map.azimuth_extent,
    };
    write_atomic(&meta_path(path), &serde_json::to_vec_pretty(&meta)?)
}

pub fn write_bev(path: impl AsRef<Path>, bev: &BevImage) -> Result<()> {
    let path = path.as_ref();
    write_tensor(path, &Tensor::from_array2(&bev.values))?;
    let meta = GridMeta::Bev {
        meters_per_pixel: bev.meters_per_pixel,
        extent_forward: bev.extent_forward,
        extent_left: bev.extent_left,
        extent_right: bev.extent_right,
    };
    write_atomic(&meta_path(path), &serde_json::to_vec_pretty(&meta)?)
}

pub fn read_meta(tensor_path: &Path) -> Result<Option<GridMeta>> {
    let mp = meta_path(tensor_path);
    if !mp.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&mp).map_err(|e| Error::io(&mp, e))?;
    Ok(Some(serde_json::from_slice(&bytes)?))
}

/// Reads a BEV image. Fails when the sidecar metadata marks the grid as polar.
pub fn read_bev(path: impl AsRef<Path>, fallback: Option<&GridMeta>) -> Result<BevImage> {
    let path = path.as_ref();
    let values = read_tensor(path)?.to_array2()?;
    let meta = match read_meta(path)? {
        Some(m) => m,
        None => fallback
            .cloned()
            .ok_or_else(|| Error::InvalidParam(format!("{} has no grid metadata", path.display())))?,
    };
    match meta {
        GridMeta::Bev {
            meters_per_pixel,
            extent_forward,
            extent_left,
            extent_right,
        } => {
            let rows = (extent_forward / meters_per_pixel).round() as usize;
            let cols = ((extent_left + extent_right) / meters_per_pixel).round() as usize;
            if values.dim() != (rows, cols) {
                return Err(Error::ShapeMismatch(format!(
                    "BEV tensor {:?} does not match extents ({rows}, {cols})",
                    values.dim()
                )));
            }
            Ok(BevImage {
                values,
                meters_per_pixel,
                extent_forward,
                extent_left,
                extent_right,
            })
        }
        GridMeta::Polar { .. } => Err(Error::InvalidParam(format!(
            "{} is a polar map; a BEV image is expected",
            path.display()
        ))),
    }
}

/// One JSON-lines record: a box tagged with its frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub frame_id: u64,
    #[serde(flatten)]
    pub bbox: OrientedBox,
}

pub fn encode_jsonl(sets: &[BoxSet]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for set in sets {
        for b in &set.boxes {
            serde_json::to_writer(
                &mut out,
                &BoxRecord {
                    frame_id: set.frame_id,
                    bbox: *b,
                },
            )?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, sets: &[BoxSet]) -> Result<()> {
    write_atomic(path.as_ref(), &encode_jsonl(sets)?)
}

/// Reads JSON-lines box records, grouped by frame id in ascending order.
/// Parse errors carry the 1-based line number.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<BoxSet>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames: std::collections::BTreeMap<u64, Vec<OrientedBox>> = Default::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BoxRecord = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidParam(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        rec.bbox
            .validate()
            .map_err(|e| Error::InvalidParam(format!("{}:{}: {e}", path.display(), i + 1)))?;
        frames.entry(rec.frame_id).or_default().push(rec.bbox);
    }
    Ok(frames
        .into_iter()
        .map(|(frame_id, boxes)| BoxSet { frame_id, boxes })
        .collect())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path.as_ref(), &bytes)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_atomic(path.as_ref(), text.as_bytes())
}
