use crate::error::{DvpError, Result};

/// Smallest spatial extent accepted for frames that make up a video.
pub const MIN_VIDEO_DIM: usize = 8;

/// One image: `height x width x channels` reals in `[0, 1]`.
///
/// Samples are stored channel-planar (all of channel 0, then channel 1, ...)
/// which is the layout the network consumes directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    /// Builds a frame from channel-planar samples, validating range and finiteness.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(DvpError::InvalidFrame(format!(
                "degenerate frame {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(DvpError::InvalidFrame(format!(
                "expected {} samples for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DvpError::InvalidFrame(format!(
                "non-finite sample at index {pos}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DvpError::InvalidFrame(format!(
                "sample {} at index {pos} outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`Frame::new`] but clamps every finite sample into `[0, 1]`.
    pub fn new_clamped(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { v })
            .collect();
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "fill value outside [0, 1]");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds a frame by evaluating `f(y, x, c)`; values are clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    /// Applies `f` to every sample, clamping the result into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn same_spatial_dims(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Luminance `0.299 R + 0.587 G + 0.114 B` of an RGB frame.
    pub fn to_grayscale(&self) -> Result<Frame> {
        if self.channels != 3 {
            return Err(DvpError::ShapeMismatch(format!(
                "grayscale conversion needs 3 channels, frame has {}",
                self.channels
            )));
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let data = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0))
            .collect();
        Frame::new(self.height, self.width, 1, data)
    }

    /// Sub-rectangle of this frame.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Frame> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(DvpError::ShapeMismatch(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Frame::from_fn(height, width, self.channels, |y, x, c| {
            self.get(top + y, left + x, c)
        }))
    }
}

/// An ordered run of frames sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    frame_rate: Option<f64>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| DvpError::Data("a video needs at least one frame".into()))?;
        let dims = first.dims();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != dims) {
            return Err(DvpError::ShapeMismatch(format!(
                "frame {i} is {:?}, frame 0 is {dims:?}",
                f.dims()
            )));
        }
        Ok(Self {
            frames,
            frame_rate: None,
        })
    }

    pub fn with_frame_rate(mut self, fps: f64) -> Self {
        self.frame_rate = Some(fps);
        self
    }

    pub fn frame_rate(&self) -> Option<f64> {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false; a sequence holds at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// `(height, width, channels)` shared by every frame.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.frames[0].dims()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Frame> {
        self.frames.iter()
    }
}

impl<'a> IntoIterator for &'a VideoSequence {
    type Item = &'a Frame;
    type IntoIter = std::slice::Iter<'a, Frame>;

    fn into_iter(self) -> Self::IntoIter {
        self.frames.iter()
    }
}

/// Input frames paired with processed frames that exist only at the
/// reference indices.
///
/// A fully populated pairing is a temporal-consistency task; a sparse one is
/// a propagation task.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedVideo {
    inputs: VideoSequence,
    processed: Vec<Option<Frame>>,
    reference_indices: Vec<usize>,
}

impl PairedVideo {
    pub fn new(inputs: VideoSequence, processed: Vec<Option<Frame>>) -> Result<Self> {
        if processed.len() != inputs.len() {
            return Err(DvpError::Data(format!(
                "{} input frames but {} processed slots",
                inputs.len(),
                processed.len()
            )));
        }
        let reference_indices: Vec<usize> = processed
            .iter()
            .enumerate()
            .filter_map(|(t, p)| p.as_ref().map(|_| t))
            .collect();
        if reference_indices.is_empty() {
            return Err(DvpError::Data("no reference (processed) frames".into()));
        }
        let in_frame = inputs.frame(0);
        let mut target_channels = None;
        for &t in &reference_indices {
            let p = processed[t].as_ref().expect("indexed above");
            if !p.same_spatial_dims(in_frame) {
                return Err(DvpError::ShapeMismatch(format!(
                    "processed frame {t} is {}x{}, inputs are {}x{}",
                    p.height(),
                    p.width(),
                    in_frame.height(),
                    in_frame.width()
                )));
            }
            match target_channels {
                None => target_channels = Some(p.channels()),
                Some(c) if c != p.channels() => {
                    return Err(DvpError::ShapeMismatch(format!(
                        "processed frame {t} has {} channels, earlier ones have {c}",
                        p.channels()
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            inputs,
            processed,
            reference_indices,
        })
    }

    /// Every input frame has its processed counterpart.
    pub fn fully_paired(inputs: VideoSequence, processed: VideoSequence) -> Result<Self> {
        if inputs.len() != processed.len() {
            return Err(DvpError::Data(format!(
                "{} input frames but {} processed frames",
                inputs.len(),
                processed.len()
            )));
        }
        Self::new(inputs, processed.into_frames().into_iter().map(Some).collect())
    }

    /// Only the listed frames carry a processed target.
    pub fn with_references(inputs: VideoSequence, references: Vec<(usize, Frame)>) -> Result<Self> {
        let mut processed = vec![None; inputs.len()];
        for (t, f) in references {
            let slot = processed.get_mut(t).ok_or_else(|| {
                DvpError::Data(format!("reference index {t} outside video of {} frames", inputs.len()))
            })?;
            *slot = Some(f);
        }
        Self::new(inputs, processed)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &VideoSequence {
        &self.inputs
    }

    pub fn processed(&self, t: usize) -> Option<&Frame> {
        self.processed.get(t).and_then(Option::as_ref)
    }

    pub fn processed_slots(&self) -> &[Option<Frame>] {
        &self.processed
    }

    pub fn reference_indices(&self) -> &[usize] {
        &self.reference_indices
    }

    pub fn is_fully_paired(&self) -> bool {
        self.reference_indices.len() == self.inputs.len()
    }

    /// Channel count of the processed frames.
    pub fn target_channels(&self) -> usize {
        self.processed(self.reference_indices[0])
            .expect("reference exists")
            .channels()
    }

    /// All processed frames as a sequence, if every slot is populated.
    pub fn processed_sequence(&self) -> Option<VideoSequence> {
        let frames: Option<Vec<Frame>> = self.processed.iter().cloned().collect();
        frames.and_then(|f| VideoSequence::new(f).ok())
    }

    /// Frames `start..end` as their own pairing.
    pub fn slice(&self, start: usize, end: usize) -> Result<PairedVideo> {
        let inputs = VideoSequence::new(self.inputs.frames()[start..end].to_vec())?;
        PairedVideo::new(inputs, self.processed[start..end].to_vec())
    }
}

/// Per-pixel class distribution stored as a `K`-channel frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    frame: Frame,
}

impl LabelMap {
    /// Wraps a frame whose channels sum to one at every pixel (within 1e-5).
    pub fn new(frame: Frame) -> Result<Self> {
        let n = frame.pixel_count();
        for i in 0..n {
            let s: f64 = (0..frame.channels()).map(|c| frame.data()[c * n + i]).sum();
            if (s - 1.0).abs() > 1e-5 {
                return Err(DvpError::Data(format!(
                    "label distribution at pixel {i} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self { frame })
    }

    /// One-hot encoding of integer class ids laid out row-major.
    pub fn from_class_ids(height: usize, width: usize, classes: usize, ids: &[u8]) -> Result<Self> {
        if ids.len() != height * width {
            return Err(DvpError::ShapeMismatch(format!(
                "{} class ids for a {height}x{width} map",
                ids.len()
            )));
        }
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= classes) {
            return Err(DvpError::Data(format!(
                "class id {bad} out of range for {classes} classes"
            )));
        }
        let frame = Frame::from_fn(height, width, classes, |y, x, c| {
            f64::from(u8::from(ids[y * width + x] as usize == c))
        });
        Ok(Self { frame })
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn into_frame(self) -> Frame {
        self.frame
    }

    pub fn classes(&self) -> usize {
        self.frame.channels()
    }

    /// Most probable class per pixel, row-major. Ties resolve to the lower id.
    pub fn argmax(&self) -> Vec<u8> {
        let n = self.frame.pixel_count();
        let k = self.frame.channels();
        let data = self.frame.data();
        (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..k {
                    if data[c * n + i] > data[best * n + i] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect()
    }

    /// Binary foreground mask (any class other than 0).
    pub fn foreground(&self) -> Vec<bool> {
        self.argmax().into_iter().map(|c| c != 0).collect()
    }
}
