//! Dense optical flow and its RGB encoding.
//!
//! Motion between consecutive face crops is computed as a dense flow field
//! and rendered to an RGB image whose color encodes direction and magnitude,
//! the input representation consumed by the convolutional classifier. Flow
//! computation is behind [`FlowProvider`] so another estimator can be
//! swapped in.

mod colorwheel;
mod farneback;

pub use colorwheel::{flow_color, flow_to_rgb, WHEEL_BINS};
pub use farneback::{dense_flow, FlowConfig};

use crate::{Error, Result};
use ndarray::{Array2, Array3};
use std::io::{Read, Write};
use std::path::Path;

/// Dense displacement field between two frames, in pixels.
///
/// Positive `u` points right, positive `v` points down; both planes share
/// one shape and hold finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFrame {
    pub u: Array2<f32>,
    pub v: Array2<f32>,
}

impl FlowFrame {
    pub fn validate(&self) -> Result<()> {
        if self.u.dim() != self.v.dim() {
            return Err(Error::ShapeMismatch(format!(
                "flow planes differ in shape: {:?} vs {:?}",
                self.u.dim(),
                self.v.dim()
            )));
        }
        if self.u.iter().chain(self.v.iter()).any(|p| !p.is_finite()) {
            return Err(Error::ShapeMismatch("flow contains non-finite values".into()));
        }
        Ok(())
    }
}

/// RGB rendering of a flow field, shape `(H, W, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowImage {
    pub rgb: Array3<u8>,
}

impl FlowImage {
    pub fn height(&self) -> usize {
        self.rgb.dim().0
    }

    pub fn width(&self) -> usize {
        self.rgb.dim().1
    }

    /// Bilinearly resize to a square `size`, for fitting network input.
    pub fn resized(&self, size: usize) -> FlowImage {
        let (h, w, _) = self.rgb.dim();
        if (h, w) == (size, size) {
            return self.clone();
        }
        let mut out = Array3::zeros((size, size, 3));
        let fy = h as f64 / size as f64;
        let fx = w as f64 / size as f64;
        for y in 0..size {
            for x in 0..size {
                let sy = ((y as f64 + 0.5) * fy - 0.5).clamp(0.0, (h - 1) as f64);
                let sx = ((x as f64 + 0.5) * fx - 0.5).clamp(0.0, (w - 1) as f64);
                let y0 = sy.floor() as usize;
                let x0 = sx.floor() as usize;
                let y1 = (y0 + 1).min(h - 1);
                let x1 = (x0 + 1).min(w - 1);
                let ty = sy - y0 as f64;
                let tx = sx - x0 as f64;
                for c in 0..3 {
                    let top = self.rgb[(y0, x0, c)] as f64 * (1.0 - tx)
                        + self.rgb[(y0, x1, c)] as f64 * tx;
                    let bot = self.rgb[(y1, x0, c)] as f64 * (1.0 - tx)
                        + self.rgb[(y1, x1, c)] as f64 * tx;
                    out[(y, x, c)] = (top * (1.0 - ty) + bot * ty).round() as u8;
                }
            }
        }
        FlowImage { rgb: out }
    }

    /// Write as PNG.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let (h, w, _) = self.rgb.dim();
        let raw = self.rgb.as_standard_layout().iter().copied().collect::<Vec<u8>>();
        let img: image::RgbImage = image::ImageBuffer::from_raw(w as u32, h as u32, raw)
            .ok_or_else(|| Error::Internal("flow image buffer size mismatch".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Format(format!("writing {}: {e}", path.display())))
    }

    /// Read a PNG written by [`FlowImage::write_png`].
    pub fn read_png(path: &Path) -> Result<FlowImage> {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("reading {}: {e}", path.display())))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        let rgb = Array3::from_shape_vec((h as usize, w as usize, 3), img.into_raw())
            .map_err(|e| Error::Internal(format!("png buffer shape: {e}")))?;
        Ok(FlowImage { rgb })
    }
}

/// Pluggable dense-flow estimator.
pub trait FlowProvider {
    fn flow(&self, frame_a: &Array2<f32>, frame_b: &Array2<f32>) -> Result<FlowFrame>;
}

/// The built-in polynomial-expansion estimator.
#[derive(Debug, Clone, Default)]
pub struct Farneback(pub FlowConfig);

impl FlowProvider for Farneback {
    fn flow(&self, frame_a: &Array2<f32>, frame_b: &Array2<f32>) -> Result<FlowFrame> {
        dense_flow(frame_a, frame_b, &self.0)
    }
}

const RAW_MAGIC: &[u8; 4] = b"VVFL";
const RAW_VERSION: u32 = 1;

/// Write a flow field as raw binary: a 16-byte header (magic `VVFL`,
/// version, height, width as little-endian u32) followed by the `u` plane
/// then the `v` plane, row-major little-endian f32.
pub fn write_flow_raw(path: &Path, flow: &FlowFrame) -> Result<()> {
    flow.validate()?;
    let (h, w) = flow.u.dim();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(RAW_MAGIC)?;
    out.write_all(&RAW_VERSION.to_le_bytes())?;
    out.write_all(&(h as u32).to_le_bytes())?;
    out.write_all(&(w as u32).to_le_bytes())?;
    for plane in [&flow.u, &flow.v] {
        for val in plane.iter() {
            out.write_all(&val.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a flow field written by [`write_flow_raw`].
pub fn read_flow_raw(path: &Path) -> Result<FlowFrame> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 16];
    file.read_exact(&mut header).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        msg: "truncated flow header".into(),
    })?;
    if &header[0..4] != RAW_MAGIC {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: "bad flow magic".into(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != RAW_VERSION {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: format!("unsupported flow version {version}"),
        });
    }
    let h = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if h == 0 || w == 0 || h.saturating_mul(w) > 1 << 28 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: format!("implausible flow shape {h}x{w}"),
        });
    }
    let mut read_plane = |name: &str| -> Result<Array2<f32>> {
        let mut buf = vec![0u8; h * w * 4];
        file.read_exact(&mut buf).map_err(|_| Error::Parse {
            path: path.display().to_string(),
            msg: format!("truncated {name} plane"),
        })?;
        let vals: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((h, w), vals)
            .map_err(|e| Error::Internal(format!("flow plane shape: {e}")))
    };
    let u = read_plane("u")?;
    let v = read_plane("v")?;
    let mut rest = [0u8; 1];
    if file.read(&mut rest)? != 0 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: "trailing bytes after flow planes".into(),
        });
    }
    let flow = FlowFrame { u, v };
    flow.validate().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(flow)
}
