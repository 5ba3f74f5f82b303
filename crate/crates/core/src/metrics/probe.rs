//! Metrics on a subset of frames, as reported once per training epoch.

use super::flow::FlowField;
use super::source::FlowSource;
use super::{e_warp_with, f_data, WarpOptions};
use crate::error::{DvpError, Result};
use crate::video::{Frame, PairedVideo, VideoSequence};

/// Serves flows for a subsequence by mapping its indices back to the
/// original frame numbers.
pub struct Reindexed<'a> {
    pub inner: &'a mut dyn FlowSource,
    pub indices: &'a [usize],
}

impl FlowSource for Reindexed<'_> {
    fn flow_between(&mut self, t: usize, s: usize, frame_t: &Frame, frame_s: &Frame) -> Result<FlowField> {
        self.inner.flow_between(self.indices[t], self.indices[s], frame_t, frame_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeMetrics {
    pub e_warp: f64,
    pub f_data: f64,
}

/// E_warp and F_data of `(frame index, output)` snapshots, treating the
/// probe frames as a short video.
pub fn probe_metrics(
    snapshots: &[(usize, Frame)],
    pv: &PairedVideo,
    flows: &mut dyn FlowSource,
    opts: &WarpOptions,
) -> Result<ProbeMetrics> {
    let indices: Vec<usize> = snapshots.iter().map(|s| s.0).collect();
    let outputs = VideoSequence::new(snapshots.iter().map(|s| s.1.clone()).collect())?;
    let inputs = VideoSequence::new(indices.iter().map(|&t| pv.inputs().frame(t).clone()).collect())?;
    let processed = indices
        .iter()
        .map(|&t| {
            pv.processed(t)
                .cloned()
                .ok_or_else(|| DvpError::Data(format!("probe frame {t} has no processed frame")))
        })
        .collect::<Result<Vec<_>>>()?;
    let processed = VideoSequence::new(processed)?;
    let mut source = Reindexed {
        inner: flows,
        indices: &indices,
    };
    Ok(ProbeMetrics {
        e_warp: e_warp_with(&outputs, &inputs, &mut source, opts)?.e_warp,
        f_data: f_data(&processed, &outputs)?.f_data,
    })
}
