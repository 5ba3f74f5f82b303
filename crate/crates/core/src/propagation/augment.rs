use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DvpError, Result};
use crate::video::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    Crop,
    /// Horizontal flip with probability one half.
    Flip,
    /// Rotation by a random multiple of 90 degrees.
    Rotate,
    /// Segmentation only: paste the foreground at a random position.
    CopyPaste,
}

/// Settings consumed by [`augment`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub augmentations: Vec<Augmentation>,
    /// `(height, width)` of random crops.
    pub crop_size: Option<(usize, usize)>,
}

pub fn flip_horizontal(f: &Frame) -> Frame {
    let w = f.width();
    Frame::from_fn(f.height(), w, f.channels(), |y, x, c| f.get(y, w - 1 - x, c))
}

/// Rotates counter-clockwise by `quarter_turns * 90` degrees.
pub fn rotate90(f: &Frame, quarter_turns: usize) -> Frame {
    let (h, w) = (f.height(), f.width());
    match quarter_turns % 4 {
        0 => f.clone(),
        1 => Frame::from_fn(w, h, f.channels(), |y, x, c| f.get(x, w - 1 - y, c)),
        2 => Frame::from_fn(h, w, f.channels(), |y, x, c| f.get(h - 1 - y, w - 1 - x, c)),
        _ => Frame::from_fn(w, h, f.channels(), |y, x, c| f.get(h - 1 - x, y, c)),
    }
}

/// Foreground of a label frame: any pixel whose largest class is not 0.
fn foreground(label: &Frame) -> Vec<bool> {
    let n = label.pixel_count();
    (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..label.channels() {
                if label.plane(c)[i] > label.plane(best)[i] {
                    best = c;
                }
            }
            best != 0
        })
        .collect()
}

/// Copies the foreground pixels of `label` (and the matching input pixels)
/// by a random offset that keeps the foreground's bounding box inside the
/// frame.
fn copy_paste(input: &Frame, label: &Frame, rng: &mut impl Rng) -> Result<(Frame, Frame)> {
    let (h, w) = (label.height(), label.width());
    let fg = foreground(label);
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in fg.iter().enumerate().filter(|(_, &b)| b) {
        let (y, x) = (i / w, i % w);
        bbox = Some(match bbox {
            None => (y, x, y, x),
            Some((y0, x0, y1, x1)) => (y0.min(y), x0.min(x), y1.max(y), x1.max(x)),
        });
    }
    let Some((y0, x0, y1, x1)) = bbox else {
        return Ok((input.clone(), label.clone()));
    };
    let ty = rng.gen_range(0..=h - (y1 - y0 + 1));
    let tx = rng.gen_range(0..=w - (x1 - x0 + 1));
    let mut in_data = input.data().to_vec();
    let mut lab_data = label.data().to_vec();
    let n = h * w;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if !fg[y * w + x] {
                continue;
            }
            let (src, dst) = (y * w + x, (ty + y - y0) * w + tx + x - x0);
            for c in 0..input.channels() {
                in_data[c * n + dst] = input.data()[c * n + src];
            }
            for c in 0..label.channels() {
                lab_data[c * n + dst] = label.data()[c * n + src];
            }
        }
    }
    Ok((
        Frame::new(h, w, input.channels(), in_data)?,
        Frame::new(h, w, label.channels(), lab_data)?,
    ))
}

/// Applies the same random spatial transform to an input and its target, in
/// the order copy-paste, crop, flip, rotate.
pub fn augment(input: &Frame, target: &Frame, spec: &AugmentSpec, rng: &mut impl Rng) -> Result<(Frame, Frame)> {
    if !input.same_spatial_dims(target) {
        return Err(DvpError::ShapeMismatch(format!(
            "input {:?} vs target {:?}",
            input.dims(),
            target.dims()
        )));
    }
    let (mut x, mut y) = (input.clone(), target.clone());
    let has = |a: Augmentation| spec.augmentations.contains(&a);
    if has(Augmentation::CopyPaste) {
        (x, y) = copy_paste(&x, &y, rng)?;
    }
    if has(Augmentation::Crop) {
        let (ch, cw) = spec
            .crop_size
            .ok_or_else(|| DvpError::Config("crop augmentation needs a crop size".into()))?;
        if ch > x.height() || cw > x.width() || ch == 0 || cw == 0 {
            return Err(DvpError::Config(format!(
                "crop {ch}x{cw} does not fit a {}x{} frame",
                x.height(),
                x.width()
            )));
        }
        let top = rng.gen_range(0..=x.height() - ch);
        let left = rng.gen_range(0..=x.width() - cw);
        x = x.crop(top, left, ch, cw)?;
        y = y.crop(top, left, ch, cw)?;
    }
    if has(Augmentation::Flip) && rng.gen_bool(0.5) {
        x = flip_horizontal(&x);
        y = flip_horizontal(&y);
    }
    if has(Augmentation::Rotate) {
        let k = rng.gen_range(0..4);
        x = rotate90(&x, k);
        y = rotate90(&y, k);
    }
    Ok((x, y))
}
