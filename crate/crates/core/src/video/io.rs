//! Reading and writing frame sequences as one image file per frame.
//!
//! Supported inputs are 8/16-bit PNG, JPEG and little/big-endian PFM (portable
//! float map). PFM is the only format able to carry out-of-range or non-finite
//! samples, which makes it the natural carrier for already-normalized data.
//! Output is always 8-bit PNG.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use super::frame::{Frame, LabelMap, VideoSequence, MIN_VIDEO_DIM};
use crate::error::{DvpError, Result};

/// Lists files in `dir` whose names match the glob `pattern`, sorted lexicographically.
pub fn list_frames(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(DvpError::MissingDirectory(dir.to_path_buf()));
    }
    let pat = glob::Pattern::new(pattern)
        .map_err(|e| DvpError::Config(format!("bad filename pattern `{pattern}`: {e}")))?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| DvpError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| pat.matches(n))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DvpError::NoFramesMatched {
            dir: dir.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    Ok(paths)
}

/// Loads every frame in `dir` matching `pattern`, in filename order.
pub fn load_sequence(dir: &Path, pattern: &str) -> Result<VideoSequence> {
    let paths = list_frames(dir, pattern)?;
    let mut frames = Vec::with_capacity(paths.len());
    let mut expected = None;
    for path in &paths {
        let frame = load_frame(path)?;
        match expected {
            None => {
                let (h, w, _) = frame.dims();
                if h < MIN_VIDEO_DIM || w < MIN_VIDEO_DIM {
                    return Err(DvpError::InvalidFrame(format!(
                        "{} is {h}x{w}; frames must be at least {MIN_VIDEO_DIM}x{MIN_VIDEO_DIM}",
                        path.display()
                    )));
                }
                expected = Some(frame.dims());
            }
            Some(dims) if dims != frame.dims() => {
                return Err(DvpError::MixedResolutions {
                    path: path.clone(),
                    expected: dims,
                    found: frame.dims(),
                });
            }
            _ => {}
        }
        frames.push(frame);
    }
    VideoSequence::new(frames)
}

/// Decodes one image file into a frame with 1 or 3 channels.
pub fn load_frame(path: &Path) -> Result<Frame> {
    let decode_err = |reason: String| DvpError::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let is_pfm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        let bytes = fs::read(path).map_err(|e| DvpError::io(path, e))?;
        let (h, w, c, data) = decode_pfm(&bytes).map_err(decode_err)?;
        return Frame::new(h, w, c, data).map_err(|e| decode_err(e.to_string()));
    }
    let img = image::open(path).map_err(|e| decode_err(e.to_string()))?;
    frame_from_image(&img).map_err(|e| decode_err(e.to_string()))
}

fn frame_from_image(img: &DynamicImage) -> Result<Frame> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    let gray = color.channel_count() <= 2;
    let sixteen = color.bytes_per_pixel() / color.channel_count() >= 2;
    let channels = if gray { 1 } else { 3 };
    let interleaved: Vec<f64> = match (gray, sixteen) {
        (true, false) => img.to_luma8().into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        (true, true) => img.to_luma16().into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
        (false, false) => img.to_rgb8().into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        (false, true) => img.to_rgb16().into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
    };
    Frame::new(h, w, channels, deinterleave(&interleaved, h * w, channels))
}

fn deinterleave(src: &[f64], pixels: usize, channels: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for i in 0..pixels {
        for c in 0..channels {
            out[c * pixels + i] = src[i * channels + c];
        }
    }
    out
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1- or 3-channel frame as an 8-bit PNG.
pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    let (h, w, c) = frame.dims();
    let n = h * w;
    let result = match c {
        1 => GrayImage::from_raw(w as u32, h as u32, frame.data().iter().map(|&v| to_u8(v)).collect())
            .expect("buffer sized from frame")
            .save(path),
        3 => {
            let mut raw = Vec::with_capacity(3 * n);
            for i in 0..n {
                for ch in 0..3 {
                    raw.push(to_u8(frame.data()[ch * n + i]));
                }
            }
            RgbImage::from_raw(w as u32, h as u32, raw)
                .expect("buffer sized from frame")
                .save(path)
        }
        other => {
            return Err(DvpError::ShapeMismatch(format!(
                "cannot write a {other}-channel frame as PNG"
            )))
        }
    };
    result.map_err(|e| DvpError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Name used for frame `t` by [`save_sequence`].
pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.png")
}

/// Writes `frame_00000.png`, `frame_00001.png`, ... into `dir` (created if missing).
pub fn save_sequence(video: &VideoSequence, dir: &Path) -> Result<()> {
    save_frames_from(video.frames(), 0, dir)
}

/// Like [`save_sequence`] but numbering starts at `offset`.
pub fn save_frames_from(frames: &[Frame], offset: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DvpError::io(dir, e))?;
    for (t, f) in frames.iter().enumerate() {
        save_frame(f, &dir.join(frame_file_name(offset + t)))?;
    }
    Ok(())
}

/// Reads a single-channel PNG of integer class ids as a one-hot label map.
pub fn load_label_map(path: &Path, classes: usize) -> Result<LabelMap> {
    let img = image::open(path).map_err(|e| DvpError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    LabelMap::from_class_ids(h as usize, w as usize, classes, gray.as_raw())
}

/// Writes per-pixel class ids as a single-channel PNG.
pub fn save_class_ids(ids: &[u8], height: usize, width: usize, path: &Path) -> Result<()> {
    GrayImage::from_raw(width as u32, height as u32, ids.to_vec())
        .ok_or_else(|| DvpError::ShapeMismatch("class id buffer does not match dims".into()))?
        .save(path)
        .map_err(|e| DvpError::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Parses a PFM image (`Pf` gray or `PF` color). Rows are stored bottom-up.
pub fn decode_pfm(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<f64>), String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PFM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match fields[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(format!("bad PFM magic `{other}`")),
    };
    let width: usize = fields[1].parse().map_err(|_| "bad PFM width")?;
    let height: usize = fields[2].parse().map_err(|_| "bad PFM height")?;
    let scale: f64 = fields[3].parse().map_err(|_| "bad PFM scale")?;
    let little = scale < 0.0;
    let count = width * height * channels;
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() < count * 4 {
        return Err("truncated PFM raster".into());
    }
    let mut data = vec![0.0; count];
    let n = width * height;
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            for c in 0..channels {
                let off = ((row * width + x) * channels + c) * 4;
                let b: [u8; 4] = raster[off..off + 4].try_into().expect("4 bytes");
                let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
                data[c * n + y * width + x] = f64::from(v);
            }
        }
    }
    Ok((height, width, channels, data))
}

/// Encodes planar samples as a little-endian PFM. Values are written as-is.
pub fn encode_pfm(height: usize, width: usize, channels: usize, data: &[f64]) -> Vec<u8> {
    assert!(channels == 1 || channels == 3, "PFM holds 1 or 3 channels");
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = Vec::new();
    write!(out, "{magic}\n{width} {height}\n-1.0\n").expect("write to vec");
    let n = width * height;
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            for c in 0..channels {
                out.extend_from_slice(&(data[c * n + y * width + x] as f32).to_le_bytes());
            }
        }
    }
    out
}
