use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dvp::metrics::{evaluate, f_data, probe_metrics, FlowSource, WarpOptions};
use dvp::network::save_checkpoint;
use dvp::plot;
use dvp::trainer::{infer_video, EpochEvent, Inference, TrainObserver};
use dvp::video::{clip_ranges, io, VideoSequence};
use dvp::{train_dvp, PairedVideo};
use log::info;
use serde::Serialize;

use crate::config::{require, RunConfig};
use crate::error::CliError;
use crate::run::{flow_source, write_manifest, Layout, Offset};

struct EpochRow {
    epoch: usize,
    mean_loss: f64,
    probe_e_warp: Option<f64>,
    probe_f_data: Option<f64>,
}

/// Records per-epoch losses and probe metrics for one clip.
struct EpochLog<'a> {
    clip: usize,
    pv: &'a PairedVideo,
    flows: Option<Offset<'a>>,
    opts: WarpOptions,
    probe: bool,
    rows: Vec<EpochRow>,
    error: Option<CliError>,
}

impl EpochLog<'_> {
    fn probe(&mut self, e: &EpochEvent<'_>) -> Result<(Option<f64>, Option<f64>), CliError> {
        if !self.probe || e.snapshots.len() < 2 {
            return Ok((None, None));
        }
        if let Some(flows) = self.flows.as_mut() {
            let m = probe_metrics(e.snapshots, self.pv, flows, &self.opts)?;
            return Ok((Some(m.e_warp), Some(m.f_data)));
        }
        let outputs = VideoSequence::new(e.snapshots.iter().map(|s| s.1.clone()).collect())?;
        let processed = VideoSequence::new(
            e.snapshots
                .iter()
                .map(|s| self.pv.processed(s.0).expect("fully paired").clone())
                .collect(),
        )?;
        Ok((None, Some(f_data(&processed, &outputs)?.f_data)))
    }
}

impl TrainObserver for EpochLog<'_> {
    fn on_epoch(&mut self, e: &EpochEvent<'_>) {
        if self.error.is_some() {
            return;
        }
        match self.probe(e) {
            Ok((w, f)) => {
                info!(
                    "clip {} epoch {} loss {:.6}{}",
                    self.clip,
                    e.epoch,
                    e.mean_loss,
                    w.map(|w| format!(" probe E_warp {w:.5}")).unwrap_or_default()
                );
                self.rows.push(EpochRow {
                    epoch: e.epoch,
                    mean_loss: e.mean_loss,
                    probe_e_warp: w,
                    probe_f_data: f,
                });
            }
            Err(err) => self.error = Some(err),
        }
    }
}

#[derive(Serialize)]
struct ClipSummary {
    clip: usize,
    start: usize,
    end: usize,
    epochs: usize,
    iterations: usize,
    stopped_reason: &'static str,
    auto_stop_epoch: Option<usize>,
}

struct ClipResult {
    summary: ClipSummary,
    rows: Vec<EpochRow>,
    inference: Inference,
}

fn train_clip(
    cfg: &RunConfig,
    layout: &Layout,
    pv: &PairedVideo,
    clip: usize,
    (start, end): (usize, usize),
) -> Result<ClipResult, CliError> {
    let clip_pv = pv.slice(start, end)?;
    let mut source = flow_source(&cfg.metrics, &layout.root.join(format!("scratch/clip_{clip:03}")))?;
    let mut log = EpochLog {
        clip,
        pv: &clip_pv,
        flows: source.as_deref_mut().map(|s| Offset {
            inner: s as &mut dyn FlowSource,
            start,
        }),
        opts: cfg.metrics.warp_options(),
        probe: cfg.metrics.probe,
        rows: Vec::new(),
        error: None,
    };
    info!("clip {clip}: frames {start}..{end}");
    let state = train_dvp(&clip_pv, &cfg.net, &cfg.train, &mut log)?;
    if let Some(err) = log.error {
        return Err(err);
    }
    save_checkpoint(&state.net, &layout.checkpoints().join(format!("clip_{clip:03}.dvpc")))?;
    let inference = infer_video(&state, clip_pv.inputs())?;
    Ok(ClipResult {
        summary: ClipSummary {
            clip,
            start,
            end,
            epochs: state.epoch,
            iterations: state.iteration,
            stopped_reason: state.stopped_reason.map_or("running", |r| r.as_str()),
            auto_stop_epoch: state.auto_stop_epoch,
        },
        rows: log.rows,
        inference,
    })
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let input_dir = require(&cfg.io.input_dir, "--input-dir")?;
    let processed_dir = require(&cfg.io.processed_dir, "--processed-dir")?;
    let out_dir = require(&cfg.io.out_dir, "--out-dir")?;
    cfg.train.validate()?;

    let inputs = io::load_sequence(input_dir, &cfg.io.pattern)?;
    let processed = io::load_sequence(processed_dir, &cfg.io.pattern)?;
    let pv = PairedVideo::fully_paired(inputs, processed)?;

    let layout = Layout::create(out_dir, cfg.train.irt)?;
    write_manifest(&layout, "stabilize", cfg.train.seed, cfg)?;

    let ranges = clip_ranges(pv.len(), cfg.io.window)?;
    let slots: Vec<Mutex<Option<Result<ClipResult, CliError>>>> = ranges.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.io.jobs.min(ranges.len()) {
            scope.spawn(|| loop {
                let clip = next.fetch_add(1, Ordering::SeqCst);
                let Some(&range) = ranges.get(clip) else { break };
                let result = train_clip(cfg, &layout, &pv, clip, range);
                *slots[clip].lock().expect("slot lock") = Some(result);
            });
        }
    });

    let mut epochs = csv::Writer::from_path(layout.metrics().join("epochs.csv"))?;
    epochs.write_record(["clip", "epoch", "mean_loss", "probe_e_warp", "probe_f_data"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut summaries = Vec::new();
    let mut main = Vec::new();
    let mut losses = Vec::new();
    for slot in slots {
        let result = slot.into_inner().expect("slot lock").expect("every clip ran")?;
        for r in &result.rows {
            epochs.write_record([
                result.summary.clip.to_string(),
                r.epoch.to_string(),
                r.mean_loss.to_string(),
                opt(r.probe_e_warp),
                opt(r.probe_f_data),
            ])?;
            losses.push(r.mean_loss);
        }
        io::save_frames_from(result.inference.main.frames(), result.summary.start, &layout.frames_main())?;
        main.extend(result.inference.main.into_frames());
        if let Some(m) = result.inference.minor {
            io::save_frames_from(m.frames(), result.summary.start, &layout.frames_minor())?;
        }
        summaries.push(result.summary);
    }
    epochs.flush().map_err(|e| CliError::io("writing epochs.csv", e))?;
    layout.write_json(&layout.metrics().join("summary.json"), &summaries)?;
    plot::line_chart(&[(&losses, plot::BLUE)], &layout.plots().join("loss.png"))?;

    if let Some(mut flows) = flow_source(&cfg.metrics, &layout.root.join("scratch/report"))? {
        let outputs = VideoSequence::new(main)?;
        let processed = pv.processed_sequence().expect("fully paired");
        let report = evaluate(&outputs, &processed, pv.inputs(), flows.as_mut(), &cfg.metrics.warp_options())?;
        report.write_csv(&layout.metrics().join("report.csv"))?;
        report.write_json(&layout.metrics().join("report.json"))?;
        report.write_plots(&layout.plots())?;
        let baseline = evaluate(&processed, &processed, pv.inputs(), flows.as_mut(), &cfg.metrics.warp_options())?;
        println!(
            "E_warp {:.5} (processed {:.5})  F_data {:.2} dB",
            report.e_warp, baseline.e_warp, report.f_data
        );
    }
    info!("wrote {}", layout.root.display());
    Ok(())
}
