//! Synthetic videos with known structure, used by tests, benchmarks and the
//! CLI's demo fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::video::{Frame, LabelMap, PairedVideo, VideoSequence};

/// Smooth colored texture built from a few random sinusoids, defined on the
/// whole plane so it can be sampled at any offset.
#[derive(Debug, Clone)]
pub struct Texture {
    /// `(fy, fx, phase, amplitude)` per channel.
    waves: Vec<Vec<(f64, f64, f64, f64)>>,
}

impl Texture {
    pub fn random(seed: u64, channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..channels)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let f = rng.gen_range(0.02..0.12);
                        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                        (f * angle.sin(), f * angle.cos(), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.05..0.12))
                    })
                    .collect()
            })
            .collect();
        Self { waves }
    }

    pub fn sample(&self, y: f64, x: f64, c: usize) -> f64 {
        let v: f64 = self.waves[c]
            .iter()
            .map(|&(fy, fx, p, a)| a * (std::f64::consts::TAU * (fy * y + fx * x) + p).sin())
            .sum();
        (0.5 + v).clamp(0.0, 1.0)
    }

    /// The texture window with top-left corner at `(oy, ox)`.
    pub fn frame(&self, height: usize, width: usize, oy: f64, ox: f64) -> Frame {
        Frame::from_fn(height, width, self.waves.len(), |y, x, c| self.sample(y as f64 + oy, x as f64 + ox, c))
    }
}

/// Settings of the flickering static-scene benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct FlickerSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Per-frame global brightness offsets are uniform in `[-a, a]`.
    pub amplitude: f64,
    /// Standard deviation of per-pixel sensor noise on the input frames.
    pub input_noise: f64,
    pub seed: u64,
}

impl Default for FlickerSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            frames: 50,
            amplitude: 0.1,
            input_noise: 0.01,
            seed: 0,
        }
    }
}

/// A static textured scene whose processed frames carry a random global
/// brightness offset each. Returns the paired video and the clean scene.
pub fn flicker_video(spec: &FlickerSpec) -> Result<(PairedVideo, Frame)> {
    let scene = Texture::random(spec.seed, 3).frame(spec.height, spec.width, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);
    let noise = Normal::new(0.0, spec.input_noise.max(0.0)).expect("finite noise scale");
    let mut inputs = Vec::with_capacity(spec.frames);
    let mut processed = Vec::with_capacity(spec.frames);
    for _ in 0..spec.frames {
        let offset = rng.gen_range(-spec.amplitude..=spec.amplitude);
        processed.push(scene.map(|v| v + offset));
        let noisy: Vec<f64> = scene.data().iter().map(|&v| v + noise.sample(&mut rng)).collect();
        inputs.push(Frame::new_clamped(spec.height, spec.width, 3, noisy)?);
    }
    let pv = PairedVideo::fully_paired(VideoSequence::new(inputs)?, VideoSequence::new(processed)?)?;
    Ok((pv, scene))
}

/// A camera panning across a texture at `velocity` pixels per frame
/// (content moves left-to-right at `-velocity`). Returns the color frames.
pub fn drifting_video(height: usize, width: usize, frames: usize, velocity: f64, seed: u64) -> Result<VideoSequence> {
    let tex = Texture::random(seed, 3);
    VideoSequence::new(
        (0..frames)
            .map(|t| tex.frame(height, width, 0.0, velocity * t as f64))
            .collect(),
    )
}

/// A square moving along a diagonal path over a textured background.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingSquare {
    pub size: usize,
    pub frame_size: usize,
    pub frames: usize,
    /// Pixels per frame along x and y.
    pub velocity: (f64, f64),
    pub color: [f64; 3],
    pub seed: u64,
}

impl MovingSquare {
    fn top_left(&self, t: usize) -> (f64, f64) {
        let margin = (self.frame_size / 8) as f64;
        (margin + self.velocity.1 * t as f64, margin + self.velocity.0 * t as f64)
    }

    fn inside(&self, t: usize, y: usize, x: usize) -> bool {
        let (ty, tx) = self.top_left(t);
        let (y, x) = (y as f64, x as f64);
        y >= ty.round() && y < ty.round() + self.size as f64 && x >= tx.round() && x < tx.round() + self.size as f64
    }

    /// Input frames and two-class (background, square) label maps.
    pub fn generate(&self) -> Result<(VideoSequence, Vec<LabelMap>)> {
        let bg = Texture::random(self.seed, 3);
        let n = self.frame_size;
        let mut frames = Vec::with_capacity(self.frames);
        let mut labels = Vec::with_capacity(self.frames);
        for t in 0..self.frames {
            frames.push(Frame::from_fn(n, n, 3, |y, x, c| {
                if self.inside(t, y, x) {
                    self.color[c]
                } else {
                    0.2 + 0.4 * bg.sample(y as f64, x as f64, c)
                }
            }));
            let ids: Vec<u8> = (0..n * n).map(|i| u8::from(self.inside(t, i / n, i % n))).collect();
            labels.push(LabelMap::from_class_ids(n, n, 2, &ids)?);
        }
        Ok((VideoSequence::new(frames)?, labels))
    }
}
