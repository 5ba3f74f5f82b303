//! Flow fields, occlusion masks and bilinear backward warping.

use std::fs;
use std::path::Path;

use crate::error::{DvpError, Result};
use crate::video::Frame;

/// Per-pixel displacement from a target frame into a source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    /// `dx` plane followed by the `dy` plane.
    data: Vec<f64>,
}

impl FlowField {
    /// `dx`/`dy` are row-major planes.
    pub fn new(height: usize, width: usize, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if n == 0 || dx.len() != n || dy.len() != n {
            return Err(DvpError::Flow(format!(
                "flow planes of {} and {} values for {height}x{width}",
                dx.len(),
                dy.len()
            )));
        }
        if let Some(v) = dx.iter().chain(&dy).find(|v| !v.is_finite()) {
            return Err(DvpError::Flow(format!("non-finite flow value {v}")));
        }
        if dx.iter().any(|v| v.abs() >= width as f64) || dy.iter().any(|v| v.abs() >= height as f64) {
            return Err(DvpError::Flow(format!("flow displacement exceeds the {height}x{width} frame")));
        }
        let mut data = dx;
        data.extend(dy);
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; 2 * height * width],
        }
    }

    pub fn constant(height: usize, width: usize, dx: f64, dy: f64) -> Result<Self> {
        let n = height * width;
        Self::new(height, width, vec![dx; n], vec![dy; n])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dx(&self) -> &[f64] {
        &self.data[..self.height * self.width]
    }

    pub fn dy(&self) -> &[f64] {
        &self.data[self.height * self.width..]
    }

    pub fn get(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.data[i], self.data[self.height * self.width + i])
    }

    fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if (self.height, self.width) != (height, width) {
            return Err(DvpError::ShapeMismatch(format!(
                "flow is {}x{} but frame is {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Binary validity mask; `true` marks a non-occluded pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcclusionMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl OcclusionMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(DvpError::ShapeMismatch(format!(
                "{} mask values for {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn all_valid(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Bilinear sample of one row-major plane at a clamped position.
fn sample(plane: &[f64], height: usize, width: usize, y: f64, x: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let at = |yy: usize, xx: usize| plane[yy * width + xx];
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn warp_planes(planes: &[&[f64]], height: usize, width: usize, flow: &FlowField) -> Vec<f64> {
    let mut out = Vec::with_capacity(planes.len() * height * width);
    for plane in planes {
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = flow.get(y, x);
                out.push(sample(plane, height, width, y as f64 + dy, x as f64 + dx));
            }
        }
    }
    out
}

/// Samples `src` at `(x + dx, y + dy)` for every pixel. Positions outside
/// the frame clamp to the nearest edge.
pub fn backward_warp(src: &Frame, flow: &FlowField) -> Result<Frame> {
    flow.check_dims(src.height(), src.width())?;
    let planes: Vec<&[f64]> = (0..src.channels()).map(|c| src.plane(c)).collect();
    let data = warp_planes(&planes, src.height(), src.width(), flow);
    // bilinear weights are convex, so values stay in range up to rounding
    Frame::new_clamped(src.height(), src.width(), src.channels(), data)
}

/// Backward-warps a flow field's components (no range check on the result).
pub fn warp_flow(field: &FlowField, by: &FlowField) -> Result<FlowField> {
    by.check_dims(field.height, field.width)?;
    let data = warp_planes(&[field.dx(), field.dy()], field.height, field.width, by);
    Ok(FlowField {
        height: field.height,
        width: field.width,
        data,
    })
}

/// Forward-backward consistency check: a pixel is valid when
/// `|f + w|^2 <= alpha1 (|f|^2 + |w|^2) + alpha2`, with `f` the forward flow
/// and `w` the backward flow warped by `f`.
pub fn occlusion_mask(f_fwd: &FlowField, f_bwd: &FlowField, alpha1: f64, alpha2: f64) -> Result<OcclusionMask> {
    let w = warp_flow(f_bwd, f_fwd)?;
    let data = (0..f_fwd.height * f_fwd.width)
        .map(|i| {
            let (fx, fy) = (f_fwd.dx()[i], f_fwd.dy()[i]);
            let (wx, wy) = (w.dx()[i], w.dy()[i]);
            let residual = (fx + wx).powi(2) + (fy + wy).powi(2);
            residual <= alpha1 * (fx * fx + fy * fy + wx * wx + wy * wy) + alpha2
        })
        .collect();
    OcclusionMask::new(f_fwd.height, f_fwd.width, data)
}

const DVPF_MAGIC: &[u8; 4] = b"DVPF";
const FLO_MAGIC: f32 = 202_021.25;

/// Encodes a flow field as `DVPF`, u32 height, u32 width, then interleaved
/// `(dx, dy)` f32 pairs in row-major order (all little-endian).
pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let n = flow.height * flow.width;
    let mut out = Vec::with_capacity(12 + 8 * n);
    out.extend_from_slice(DVPF_MAGIC);
    out.extend_from_slice(&(flow.height as u32).to_le_bytes());
    out.extend_from_slice(&(flow.width as u32).to_le_bytes());
    for i in 0..n {
        out.extend_from_slice(&(flow.dx()[i] as f32).to_le_bytes());
        out.extend_from_slice(&(flow.dy()[i] as f32).to_le_bytes());
    }
    out
}

/// Decodes `DVPF` files and Middlebury `.flo` files.
pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    let bad = |m: &str| DvpError::Flow(m.to_string());
    if bytes.len() < 12 {
        return Err(bad("flow file too short"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (height, width) = if &bytes[..4] == DVPF_MAGIC {
        (word(4) as usize, word(8) as usize)
    } else if f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) == FLO_MAGIC {
        (word(8) as usize, word(4) as usize)
    } else {
        return Err(bad("unknown flow file magic"));
    };
    let n = height
        .checked_mul(width)
        .ok_or_else(|| bad("flow dimensions overflow"))?;
    if bytes.len() != 12 + 8 * n {
        return Err(bad(&format!("expected {} flow bytes for {height}x{width}, found {}", 12 + 8 * n, bytes.len())));
    }
    let value = |i: usize| f64::from(f32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")));
    let dx = (0..n).map(|i| value(12 + 8 * i)).collect();
    let dy = (0..n).map(|i| value(16 + 8 * i)).collect();
    FlowField::new(height, width, dx, dy)
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| DvpError::io(path, e))?;
    decode_flow(&bytes).map_err(|e| DvpError::Flow(format!("{}: {e}", path.display())))
}

pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    fs::write(path, encode_flow(flow)).map_err(|e| DvpError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_identity() {
        let f = Frame::from_fn(6, 7, 3, |y, x, c| ((y * 7 + x + c) % 9) as f64 / 9.0);
        assert_eq!(backward_warp(&f, &FlowField::zeros(6, 7)).unwrap(), f);
    }

    #[test]
    fn unit_shift_reconstructs_interior() {
        let src = Frame::from_fn(8, 8, 1, |y, x, _| ((y * 8 + x) % 13) as f64 / 13.0);
        // target(x) = src(x + 1)
        let flow = FlowField::constant(8, 8, 1.0, 0.0).unwrap();
        let out = backward_warp(&src, &flow).unwrap();
        for y in 0..8 {
            for x in 0..7 {
                assert_eq!(out.get(y, x, 0), src.get(y, x + 1, 0));
            }
        }
    }

    #[test]
    fn occlusion_examples() {
        let f = FlowField::constant(8, 8, 1.5, -0.5).unwrap();
        let b = FlowField::constant(8, 8, -1.5, 0.5).unwrap();
        assert_eq!(occlusion_mask(&f, &b, 0.01, 0.5).unwrap().valid_count(), 64);
        let z = FlowField::zeros(8, 8);
        assert_eq!(occlusion_mask(&z, &z, 0.01, 0.5).unwrap().valid_count(), 64);
        let big = FlowField::constant(16, 16, 10.0, 0.0).unwrap();
        assert_eq!(occlusion_mask(&big, &FlowField::zeros(16, 16), 0.01, 0.5).unwrap().valid_count(), 0);
    }

    #[test]
    fn flow_invariants() {
        assert!(FlowField::constant(4, 4, 4.0, 0.0).is_err());
        assert!(FlowField::constant(4, 4, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn flow_file_round_trip() {
        let f = FlowField::new(2, 3, vec![0.5, -1.0, 0.0, 1.25, 2.0, -2.5], vec![0.0, 0.25, -0.5, 1.0, 0.0, 0.75]).unwrap();
        assert_eq!(decode_flow(&encode_flow(&f)).unwrap(), f);
        // Middlebury layout: magic, width, height, interleaved pairs
        let mut flo = FLO_MAGIC.to_le_bytes().to_vec();
        flo.extend_from_slice(&3u32.to_le_bytes());
        flo.extend_from_slice(&2u32.to_le_bytes());
        flo.extend_from_slice(&encode_flow(&f)[12..]);
        assert_eq!(decode_flow(&flo).unwrap(), f);
        assert!(decode_flow(&flo[..20]).is_err());
    }
}
