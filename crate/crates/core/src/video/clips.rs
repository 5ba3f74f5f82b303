use super::frame::PairedVideo;
use crate::error::{DvpError, Result};

/// Frame ranges produced by [`split_clips`] for a video of `len` frames.
///
/// Consecutive windows of `window` frames; a trailing remainder shorter than
/// two frames is folded into the previous clip so every clip supports a
/// frame-pair metric.
pub fn clip_ranges(len: usize, window: usize) -> Result<Vec<(usize, usize)>> {
    if window < 2 {
        return Err(DvpError::Config(format!("clip window {window} must be at least 2")));
    }
    let mut ranges: Vec<(usize, usize)> = (0..len)
        .step_by(window)
        .map(|start| (start, (start + window).min(len)))
        .collect();
    if ranges.len() >= 2 {
        let (start, end) = ranges[ranges.len() - 1];
        if end - start < 2 {
            ranges.pop();
            ranges.last_mut().expect("at least one clip").1 = end;
        }
    }
    Ok(ranges)
}

/// Splits a paired video into consecutive non-overlapping clips.
pub fn split_clips(video: &PairedVideo, window: usize) -> Result<Vec<PairedVideo>> {
    clip_ranges(video.len(), window)?
        .into_iter()
        .map(|(s, e)| video.slice(s, e))
        .collect()
}
