//! Frame and video containers plus disk I/O and resampling.

mod clips;
mod frame;
pub mod io;
mod resample;

pub use clips::{clip_ranges, split_clips};
pub use frame::{Frame, LabelMap, PairedVideo, VideoSequence, MIN_VIDEO_DIM};
pub use io::{load_sequence, save_sequence};
pub use resample::{resize_frame, resize_sequence, scaled_dims};
