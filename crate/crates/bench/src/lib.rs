//! Fixtures shared by the benchmarks.

use dvp::synth::Texture;
use dvp::{PairedVideo, VideoSequence};

/// A smooth RGB texture panning right by one pixel per frame.
pub fn panning(frames: usize, size: usize) -> VideoSequence {
    let tex = Texture::random(1, 3);
    VideoSequence::new((0..frames).map(|t| tex.frame(size, size, 0.0, t as f64)).collect()).expect("non-empty")
}

/// `panning` paired with itself.
pub fn identity_pair(frames: usize, size: usize) -> PairedVideo {
    let v = panning(frames, size);
    PairedVideo::fully_paired(v.clone(), v).expect("same length")
}
