use crate::error::{DvpError, Result};
use crate::nn::{Scalar, Tensor};
use crate::video::Frame;

/// Remembers the original size of a frame padded on its bottom/right edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
    pub padded_height: usize,
    pub padded_width: usize,
}

impl CropRecord {
    pub fn for_dims(height: usize, width: usize, multiple: usize) -> Self {
        let round_up = |v: usize| v.div_ceil(multiple) * multiple;
        Self {
            height,
            width,
            padded_height: round_up(height),
            padded_width: round_up(width),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.height == self.padded_height && self.width == self.padded_width
    }

    pub fn crop_tensor<T: Scalar>(&self, t: &Tensor<T>) -> Tensor<T> {
        if self.is_identity() {
            return t.clone();
        }
        let mut out = Tensor::zeros(t.channels, self.height, self.width);
        for c in 0..t.channels {
            for y in 0..self.height {
                let src = &t.data[(c * t.height + y) * t.width..][..self.width];
                out.data[(c * self.height + y) * self.width..][..self.width].copy_from_slice(src);
            }
        }
        out
    }

    /// Adjoint of [`CropRecord::crop_tensor`]: embeds into the padded size with zeros.
    pub fn uncrop_gradient<T: Scalar>(&self, g: &Tensor<T>) -> Tensor<T> {
        if self.is_identity() {
            return g.clone();
        }
        let mut out = Tensor::zeros(g.channels, self.padded_height, self.padded_width);
        for c in 0..g.channels {
            for y in 0..self.height {
                let src = &g.data[(c * self.height + y) * self.width..][..self.width];
                out.data[(c * self.padded_height + y) * self.padded_width..][..self.width]
                    .copy_from_slice(src);
            }
        }
        out
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

pub(crate) fn pad_reflect_tensor<T: Scalar>(t: &Tensor<T>, multiple: usize) -> (Tensor<T>, CropRecord) {
    let record = CropRecord::for_dims(t.height, t.width, multiple);
    if record.is_identity() {
        return (t.clone(), record);
    }
    let (ph, pw) = (record.padded_height, record.padded_width);
    let mut out = Tensor::zeros(t.channels, ph, pw);
    for c in 0..t.channels {
        for y in 0..ph {
            let sy = reflect(y, t.height);
            for x in 0..pw {
                out.data[(c * ph + y) * pw + x] = t.data[(c * t.height + sy) * t.width + reflect(x, t.width)];
            }
        }
    }
    (out, record)
}

/// Pads bottom/right edges by reflection up to the next multiple of `multiple`.
pub fn pad_reflect(frame: &Frame, multiple: usize) -> Result<(Frame, CropRecord)> {
    if multiple == 0 {
        return Err(DvpError::Config("padding multiple must be positive".into()));
    }
    let (padded, record) = pad_reflect_tensor(&Tensor::<f64>::from_frame(frame), multiple);
    Ok((padded.to_frame(), record))
}

/// Undoes [`pad_reflect`].
pub fn crop(frame: &Frame, record: &CropRecord) -> Result<Frame> {
    if frame.height() != record.padded_height || frame.width() != record.padded_width {
        return Err(DvpError::ShapeMismatch(format!(
            "frame is {}x{}, crop record expects {}x{}",
            frame.height(),
            frame.width(),
            record.padded_height,
            record.padded_width
        )));
    }
    frame.crop(0, 0, record.height, record.width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_then_crop_is_exact() {
        let f = Frame::from_fn(60, 60, 3, |y, x, c| ((y * 7 + x * 3 + c) % 13) as f64 / 13.0);
        let (p, rec) = pad_reflect(&f, 16).unwrap();
        assert_eq!(p.dims(), (64, 64, 3));
        assert_eq!(crop(&p, &rec).unwrap(), f);
        // mirror without edge repeat
        assert_eq!(p.get(60, 5, 0), f.get(58, 5, 0));
    }

    #[test]
    fn divisible_is_identity_and_ceiling_dims() {
        let f = Frame::filled(64, 64, 1, 0.2);
        let (p, rec) = pad_reflect(&f, 16).unwrap();
        assert!(rec.is_identity());
        assert_eq!(p, f);
        let g = Frame::filled(33, 47, 1, 0.2);
        assert_eq!(pad_reflect(&g, 16).unwrap().0.dims(), (48, 48, 1));
    }

    #[test]
    fn reflect_handles_long_pads() {
        let f = Frame::from_fn(2, 2, 1, |y, x, _| (y * 2 + x) as f64 / 4.0);
        let (p, rec) = pad_reflect(&f, 8).unwrap();
        assert_eq!(p.dims(), (8, 8, 1));
        assert_eq!(crop(&p, &rec).unwrap(), f);
    }
}
