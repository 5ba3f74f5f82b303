use super::frame::{Frame, VideoSequence, MIN_VIDEO_DIM};
use crate::error::{DvpError, Result};

/// Bilinear resampling with half-pixel centers; edges are clamped.
pub fn resize_frame(frame: &Frame, height: usize, width: usize) -> Frame {
    let (h, w, c) = frame.dims();
    if (h, w) == (height, width) {
        return frame.clone();
    }
    let rows = axis_taps(h, height);
    let cols = axis_taps(w, width);
    Frame::from_fn(height, width, c, |y, x, ch| {
        let (y0, y1, fy) = rows[y];
        let (x0, x1, fx) = cols[x];
        let top = frame.get(y0, x0, ch) * (1.0 - fx) + frame.get(y0, x1, ch) * fx;
        let bottom = frame.get(y1, x0, ch) * (1.0 - fx) + frame.get(y1, x1, ch) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// For each output index: the two source taps and the weight of the second.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Output dimensions for a scale factor: `round(scale * dim)`.
pub fn scaled_dims(height: usize, width: usize, scale: f64) -> Result<(usize, usize)> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(DvpError::Config(format!("scale {scale} outside (0, 1]")));
    }
    let h = (scale * height as f64).round() as usize;
    let w = (scale * width as f64).round() as usize;
    if h < MIN_VIDEO_DIM || w < MIN_VIDEO_DIM {
        return Err(DvpError::Config(format!(
            "scale {scale} turns {height}x{width} into {h}x{w}, below the {MIN_VIDEO_DIM}-pixel minimum"
        )));
    }
    Ok((h, w))
}

/// Bilinearly rescales every frame by `scale` in `(0, 1]`.
pub fn resize_sequence(video: &VideoSequence, scale: f64) -> Result<VideoSequence> {
    let (h, w, _) = video.dims();
    let (nh, nw) = scaled_dims(h, w, scale)?;
    let frames = video.iter().map(|f| resize_frame(f, nh, nw)).collect();
    let out = VideoSequence::new(frames)?;
    Ok(match video.frame_rate() {
        Some(fps) => out.with_frame_rate(fps),
        None => out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_scale_dims_and_constants() {
        let f = Frame::filled(64, 64, 3, 0.37);
        let v = VideoSequence::new(vec![f.clone(), f]).unwrap();
        let r = resize_sequence(&v, 0.5).unwrap();
        assert_eq!(r.dims(), (32, 32, 3));
        assert!(r.frame(0).data().iter().all(|&x| (x - 0.37).abs() < 1e-12));
    }

    #[test]
    fn scale_one_is_identity_and_bad_scales_fail() {
        let f = Frame::from_fn(16, 24, 1, |y, x, _| (y * 24 + x) as f64 / 400.0);
        let v = VideoSequence::new(vec![f]).unwrap();
        assert_eq!(resize_sequence(&v, 1.0).unwrap(), v);
        assert!(resize_sequence(&v, 0.0).is_err());
        assert!(resize_sequence(&v, 1.5).is_err());
        assert!(resize_sequence(&v, 0.25).is_err());
    }
}
