use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{e_warp_with, f_data, mean_intensity_trace, FlowSource, WarpOptions};
use crate::error::{DvpError, Result};
use crate::plot;
use crate::video::VideoSequence;

/// Warping error, fidelity and their per-frame series for one output video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub e_warp: f64,
    /// dB.
    pub f_data: f64,
    /// `E_pair(O_t, O_{t-1})`, `t = 1..T`.
    pub short_term: Vec<f64>,
    /// `E_pair(O_t, O_0)`, `t = 1..T`.
    pub long_term: Vec<f64>,
    /// PSNR(P_t, O_t), `t = 1..T`.
    pub psnr: Vec<f64>,
    pub output_intensity: Vec<f64>,
    pub processed_intensity: Vec<f64>,
}

/// Computes every metric for `outputs` against `processed`, with flows
/// taken from `inputs`.
pub fn evaluate(
    outputs: &VideoSequence,
    processed: &VideoSequence,
    inputs: &VideoSequence,
    flows: &mut dyn FlowSource,
    opts: &WarpOptions,
) -> Result<MetricReport> {
    let warp = e_warp_with(outputs, inputs, flows, opts)?;
    let fid = f_data(processed, outputs)?;
    Ok(MetricReport {
        e_warp: warp.e_warp,
        f_data: fid.f_data,
        short_term: warp.short_term,
        long_term: warp.long_term,
        psnr: fid.psnr,
        output_intensity: mean_intensity_trace(outputs),
        processed_intensity: mean_intensity_trace(processed),
    })
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> DvpError {
    DvpError::Data(format!("cannot write {}: {e}", path.display()))
}

impl MetricReport {
    /// Per-frame CSV: `frame,e_pair_prev,e_pair_first,psnr,output_intensity,processed_intensity`.
    /// Pair columns are empty for frame 0.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
        w.write_record(["frame", "e_pair_prev", "e_pair_first", "psnr", "output_intensity", "processed_intensity"])
            .map_err(|e| write_err(path, e))?;
        for t in 0..self.output_intensity.len() {
            let pair = |s: &[f64]| if t == 0 { String::new() } else { s[t - 1].to_string() };
            w.write_record([
                t.to_string(),
                pair(&self.short_term),
                pair(&self.long_term),
                pair(&self.psnr),
                self.output_intensity[t].to_string(),
                self.processed_intensity[t].to_string(),
            ])
            .map_err(|e| write_err(path, e))?;
        }
        w.flush().map_err(|e| write_err(path, e))
    }

    /// JSON summary with the scalar metrics and all series.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text).map_err(|e| DvpError::io(path, e))
    }

    /// `warp_series.png` (short-term blue, long-term orange) and
    /// `mean_intensity.png` (processed gray, output blue).
    pub fn write_plots(&self, dir: &Path) -> Result<()> {
        plot::line_chart(
            &[(&self.short_term, plot::BLUE), (&self.long_term, plot::ORANGE)],
            &dir.join("warp_series.png"),
        )?;
        plot::line_chart(
            &[(&self.processed_intensity, plot::GRAY), (&self.output_intensity, plot::BLUE)],
            &dir.join("mean_intensity.png"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ZeroFlow;
    use crate::video::Frame;

    #[test]
    fn identical_videos_report() {
        let v = VideoSequence::new((0..3).map(|_| Frame::filled(8, 8, 3, 0.5)).collect()).unwrap();
        let r = evaluate(&v, &v, &v, &mut ZeroFlow, &WarpOptions::default()).unwrap();
        assert_eq!(r.e_warp, 0.0);
        assert_eq!(r.f_data, 100.0);
        let dir = tempfile::tempdir().unwrap();
        r.write_csv(&dir.path().join("m.csv")).unwrap();
        let text = fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("0,,,"));
        r.write_json(&dir.path().join("m.json")).unwrap();
        r.write_plots(dir.path()).unwrap();
    }
}
