//! Temporal-consistency and fidelity metrics.

mod flow;
mod probe;
mod report;
mod source;
mod stats;

pub use flow::{
    backward_warp, decode_flow, encode_flow, occlusion_mask, read_flow, warp_flow, write_flow, FlowField,
    OcclusionMask,
};
pub use probe::{probe_metrics, ProbeMetrics, Reindexed};
pub use report::{evaluate, MetricReport};
pub use source::{CommandFlowSource, ConstantTranslation, FileFlowSource, FlowSource, ZeroFlow};
pub use stats::{iou, ranks, spearman};

use serde::{Deserialize, Serialize};

use crate::error::{DvpError, Result};
use crate::video::{Frame, VideoSequence};

pub const DEFAULT_ALPHA1: f64 = 0.01;
pub const DEFAULT_ALPHA2: f64 = 0.5;
pub const PSNR_CAP: f64 = 100.0;

/// How the per-pixel L1 norm combines channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelReduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpOptions {
    pub alpha1: f64,
    pub alpha2: f64,
    pub reduction: ChannelReduction,
}

impl Default for WarpOptions {
    fn default() -> Self {
        Self {
            alpha1: DEFAULT_ALPHA1,
            alpha2: DEFAULT_ALPHA2,
            reduction: ChannelReduction::Sum,
        }
    }
}

/// Masked mean of the per-pixel L1 distance between `o_t` and `o_s`
/// warped into frame `t`.
pub fn e_pair(o_t: &Frame, o_s: &Frame, flow_t_to_s: &FlowField, mask: &OcclusionMask) -> Result<f64> {
    e_pair_with(o_t, o_s, flow_t_to_s, mask, ChannelReduction::Sum)
}

pub fn e_pair_with(
    o_t: &Frame,
    o_s: &Frame,
    flow_t_to_s: &FlowField,
    mask: &OcclusionMask,
    reduction: ChannelReduction,
) -> Result<f64> {
    if o_t.dims() != o_s.dims() {
        return Err(DvpError::ShapeMismatch(format!("{:?} vs {:?}", o_t.dims(), o_s.dims())));
    }
    if (mask.height(), mask.width()) != (o_t.height(), o_t.width()) {
        return Err(DvpError::ShapeMismatch(format!(
            "mask {}x{} vs frame {}x{}",
            mask.height(),
            mask.width(),
            o_t.height(),
            o_t.width()
        )));
    }
    let valid = mask.valid_count();
    if valid == 0 {
        return Err(DvpError::NoValidPixels);
    }
    let warped = backward_warp(o_s, flow_t_to_s)?;
    let n = o_t.pixel_count();
    let mut total = 0.0;
    for c in 0..o_t.channels() {
        let (a, b) = (o_t.plane(c), warped.plane(c));
        for i in (0..n).filter(|&i| mask.as_slice()[i]) {
            total += (a[i] - b[i]).abs();
        }
    }
    let per_pixel = match reduction {
        ChannelReduction::Sum => 1.0,
        ChannelReduction::Mean => o_t.channels() as f64,
    };
    Ok(total / (valid as f64 * per_pixel))
}

/// Warping error of a sequence with its per-pair series.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpError {
    pub e_warp: f64,
    /// `E_pair(O_t, O_{t-1})` for `t = 1..T`.
    pub short_term: Vec<f64>,
    /// `E_pair(O_t, O_0)` for `t = 1..T`.
    pub long_term: Vec<f64>,
}

/// Mean over `t >= 1` of the short-term plus long-term pair errors. Flows
/// and occlusion masks come from `inputs`.
pub fn e_warp(outputs: &VideoSequence, inputs: &VideoSequence, flows: &mut dyn FlowSource) -> Result<WarpError> {
    e_warp_with(outputs, inputs, flows, &WarpOptions::default())
}

pub fn e_warp_with(
    outputs: &VideoSequence,
    inputs: &VideoSequence,
    flows: &mut dyn FlowSource,
    opts: &WarpOptions,
) -> Result<WarpError> {
    if outputs.len() < 2 {
        return Err(DvpError::Data("warping error needs at least two frames".into()));
    }
    if outputs.len() != inputs.len() {
        return Err(DvpError::ShapeMismatch(format!(
            "{} output frames vs {} input frames",
            outputs.len(),
            inputs.len()
        )));
    }
    let mut pair = |t: usize, s: usize| -> Result<f64> {
        let (it, is) = (inputs.frame(t), inputs.frame(s));
        let fwd = flows.flow_between(t, s, it, is)?;
        let bwd = flows.flow_between(s, t, is, it)?;
        let mask = occlusion_mask(&fwd, &bwd, opts.alpha1, opts.alpha2)?;
        e_pair_with(outputs.frame(t), outputs.frame(s), &fwd, &mask, opts.reduction)
    };
    let mut short_term = Vec::with_capacity(outputs.len() - 1);
    let mut long_term = Vec::with_capacity(outputs.len() - 1);
    for t in 1..outputs.len() {
        let short = pair(t, t - 1)?;
        short_term.push(short);
        long_term.push(if t == 1 { short } else { pair(t, 0)? });
    }
    let e_warp = short_term.iter().zip(&long_term).map(|(a, b)| a + b).sum::<f64>() / short_term.len() as f64;
    Ok(WarpError {
        e_warp,
        short_term,
        long_term,
    })
}

/// PSNR with peak 1, capped at [`PSNR_CAP`] for near-identical frames.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(DvpError::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    if mse < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// Data fidelity with its per-frame PSNR series (`t = 1..T`).
#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    pub f_data: f64,
    pub psnr: Vec<f64>,
}

/// Mean PSNR between processed and output frames, first frame excluded.
pub fn f_data(processed: &VideoSequence, outputs: &VideoSequence) -> Result<Fidelity> {
    if processed.len() < 2 {
        return Err(DvpError::Data("data fidelity needs at least two frames".into()));
    }
    if processed.len() != outputs.len() {
        return Err(DvpError::ShapeMismatch(format!(
            "{} processed frames vs {} outputs",
            processed.len(),
            outputs.len()
        )));
    }
    let series = (1..processed.len())
        .map(|t| psnr(processed.frame(t), outputs.frame(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fidelity {
        f_data: series.iter().sum::<f64>() / series.len() as f64,
        psnr: series,
    })
}

/// Per-frame mean over all pixels and channels.
pub fn mean_intensity_trace(v: &VideoSequence) -> Vec<f64> {
    v.iter().map(Frame::mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(frames: Vec<Frame>) -> VideoSequence {
        VideoSequence::new(frames).unwrap()
    }

    #[test]
    fn e_pair_examples() {
        let a = Frame::filled(8, 8, 3, 0.4);
        let z = FlowField::zeros(8, 8);
        let m = OcclusionMask::all_valid(8, 8);
        assert_eq!(e_pair(&a, &a, &z, &m).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((e_pair(&b, &a, &z, &m).unwrap() - 0.3).abs() < 1e-12);
        assert!((e_pair_with(&b, &a, &z, &m, ChannelReduction::Mean).unwrap() - 0.1).abs() < 1e-12);
        let none = OcclusionMask::new(8, 8, vec![false; 64]).unwrap();
        assert!(matches!(e_pair(&a, &a, &z, &none), Err(DvpError::NoValidPixels)));
    }

    #[test]
    fn alternating_brightness_closed_form() {
        // frames alternate base+0.05 / base-0.05: every short-term pair
        // differs by 0.1 per channel and long-term pairs alternate 0 / 0.1
        let frames: Vec<Frame> = (0..6)
            .map(|t| Frame::filled(8, 8, 3, if t % 2 == 0 { 0.55 } else { 0.45 }))
            .collect();
        let v = seq(frames);
        let r = e_warp(&v, &v, &mut ZeroFlow).unwrap();
        for s in &r.short_term {
            assert!((s - 0.3).abs() < 1e-12);
        }
        let expect_long = [0.3, 0.0, 0.3, 0.0, 0.3];
        for (l, e) in r.long_term.iter().zip(expect_long) {
            assert!((l - e).abs() < 1e-12);
        }
        let closed = (5.0 * 0.3 + 3.0 * 0.3) / 5.0;
        assert!((r.e_warp - closed).abs() < 1e-12);
    }

    #[test]
    fn f_data_examples() {
        let a = seq((0..3).map(|_| Frame::filled(8, 8, 3, 0.5)).collect());
        assert_eq!(f_data(&a, &a).unwrap().f_data, PSNR_CAP);
        let b = seq((0..3).map(|_| Frame::filled(8, 8, 3, 0.6)).collect());
        assert!((f_data(&a, &b).unwrap().f_data - 20.0).abs() < 1e-9);
        assert!(f_data(&seq(vec![Frame::filled(8, 8, 3, 0.5)]), &seq(vec![Frame::filled(8, 8, 3, 0.5)])).is_err());
    }

    #[test]
    fn mean_intensity_examples() {
        let v = seq((0..4).map(|t| Frame::filled(8, 8, 3, if t % 2 == 0 { 0.4 } else { 0.6 })).collect());
        let trace = mean_intensity_trace(&v);
        assert_eq!(trace.len(), 4);
        assert!((trace[0] - 0.4).abs() < 1e-12 && (trace[1] - 0.6).abs() < 1e-12);
    }
}
