//! Minimal raster charts (no text) saved as PNG.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{DvpError, Result};

pub const WIDTH: u32 = 480;
pub const HEIGHT: u32 = 320;
const MARGIN: f64 = 24.0;

pub const BLUE: [u8; 3] = [31, 119, 180];
pub const ORANGE: [u8; 3] = [255, 127, 14];
pub const GREEN: [u8; 3] = [44, 160, 44];
pub const RED: [u8; 3] = [214, 39, 40];
pub const GRAY: [u8; 3] = [140, 140, 140];

struct Canvas {
    img: RgbImage,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

impl Canvas {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let (l, b) = (MARGIN as u32, HEIGHT - MARGIN as u32);
        for x in l..WIDTH - MARGIN as u32 / 2 {
            img.put_pixel(x, b, Rgb([0, 0, 0]));
        }
        for y in MARGIN as u32 / 2..=b {
            img.put_pixel(l, y, Rgb([0, 0, 0]));
        }
        Self { img, x_range, y_range }
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = WIDTH as f64 - 1.5 * MARGIN;
        let h = HEIGHT as f64 - 1.5 * MARGIN;
        let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (MARGIN + fx * w, HEIGHT as f64 - MARGIN - fy * h)
    }

    fn dot(&mut self, px: f64, py: f64, color: [u8; 3], radius: i64) {
        let (cx, cy) = (px.round() as i64, py.round() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
                    self.img.put_pixel(x as u32, y as u32, Rgb(color));
                }
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let f = i as f64 / steps as f64;
            self.dot(a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f, color, 0);
        }
    }
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| DvpError::io(parent, e))?;
    }
    img.save(path)
        .map_err(|e| DvpError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Each series is plotted against its index.
pub fn line_chart(series: &[(&[f64], [u8; 3])], path: &Path) -> Result<()> {
    let longest = series.iter().map(|(s, _)| s.len()).max().unwrap_or(0);
    let x_range = (0.0, (longest.max(2) - 1) as f64);
    let y_range = padded_range(series.iter().flat_map(|(s, _)| s.iter().copied()));
    let mut canvas = Canvas::new(x_range, y_range);
    for (values, color) in series {
        let pts: Vec<(f64, f64)> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| canvas.to_px(i as f64, v))
            .collect();
        for w in pts.windows(2) {
            canvas.line(w[0], w[1], *color);
        }
        for &p in &pts {
            canvas.dot(p.0, p.1, *color, 1);
        }
    }
    save(&canvas.img, path)
}

/// Scatter plot of `(x, y, color)` points, drawn in order.
pub fn scatter_chart(points: &[(f64, f64, [u8; 3])], path: &Path) -> Result<()> {
    let x_range = padded_range(points.iter().map(|p| p.0));
    let y_range = padded_range(points.iter().map(|p| p.1));
    let mut canvas = Canvas::new(x_range, y_range);
    for &(x, y, color) in points {
        let (px, py) = canvas.to_px(x, y);
        canvas.dot(px, py, color, 3);
    }
    save(&canvas.img, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/line.png");
        line_chart(&[(&[1.0, 2.0, 1.5], BLUE), (&[0.5], RED)], &p).unwrap();
        assert_eq!(image::open(&p).unwrap().width(), WIDTH);
        let q = dir.path().join("scatter.png");
        scatter_chart(&[(0.0, 0.0, GREEN), (1.0, f64::NAN, RED)], &q).unwrap();
        assert!(q.exists());
    }
}
