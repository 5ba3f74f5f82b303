use super::scalar::Scalar;
use crate::video::Frame;

/// A single `channels x height x width` activation map, channel-planar.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor buffer size");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn from_frame(frame: &Frame) -> Self {
        let (h, w, c) = frame.dims();
        Self::from_vec(c, h, w, frame.data().iter().map(|&v| T::of(v)).collect())
    }

    /// Converts back to a frame, clamping into `[0, 1]`.
    pub fn to_frame(&self) -> Frame {
        let data = self.data.iter().map(|v| v.f64().clamp(0.0, 1.0)).collect();
        Frame::new(self.height, self.width, self.channels, data).expect("clamped finite tensor")
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Tensor<T>) -> bool {
        (self.channels, self.height, self.width) == (other.channels, other.height, other.width)
    }

    /// Channels `start..start + count` as a new tensor.
    pub fn channel_slice(&self, start: usize, count: usize) -> Self {
        let n = self.plane_len();
        Self::from_vec(
            count,
            self.height,
            self.width,
            self.data[start * n..(start + count) * n].to_vec(),
        )
    }

    /// Stacks tensors of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[Tensor<T>]) -> Self {
        let (h, w) = (parts[0].height, parts[0].width);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut channels = 0;
        for p in parts {
            assert_eq!((p.height, p.width), (h, w), "concat spatial mismatch");
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Self::from_vec(channels, h, w, data)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_vec(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|v| U::of(v.f64())).collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
