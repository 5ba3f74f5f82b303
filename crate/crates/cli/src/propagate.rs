use dvp::network::save_checkpoint;
use dvp::propagation::{propagate, propagate_segmentation, MemoryQueue, Task};
use dvp::trainer::{IterationEvent, TrainObserver};
use dvp::video::io;
use dvp::{Frame, PairedVideo};
use log::info;

use crate::config::{require, RunConfig};
use crate::error::CliError;
use crate::run::{write_manifest, Layout};

#[derive(Default)]
struct IterationLog(Vec<(usize, usize, f64)>);

impl TrainObserver for IterationLog {
    fn on_iteration(&mut self, e: &IterationEvent) {
        self.0.push((e.iteration, e.frame_index, e.loss));
    }
}

fn load_references(cfg: &RunConfig, len: usize) -> Result<Vec<(usize, Frame)>, CliError> {
    let frames = &cfg.io.reference_frames;
    if frames.is_empty() {
        return Err(CliError::Config("propagate needs at least one reference (--reference-frames)".into()));
    }
    let dir = require(&cfg.io.reference_dir, "--reference-dir")?;
    let paths = io::list_frames(dir, &cfg.io.pattern)?;
    if paths.len() != frames.len() {
        return Err(CliError::Config(format!(
            "{} reference frames listed but {} files in {}",
            frames.len(),
            paths.len(),
            dir.display()
        )));
    }
    frames
        .iter()
        .zip(&paths)
        .map(|(&t, path)| {
            if t >= len {
                return Err(CliError::Config(format!("reference frame {t} is beyond the {len}-frame video")));
            }
            let target = match cfg.propagate.task {
                Task::Segmentation => io::load_label_map(path, cfg.io.classes)?.into_frame(),
                _ => io::load_frame(path)?,
            };
            Ok((t, target))
        })
        .collect()
}

fn write_queue(queue: &MemoryQueue, layout: &Layout) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(layout.metrics().join("queue.csv"))?;
    w.write_record(["position", "frame", "is_pseudo"])?;
    for (i, e) in queue.entries().iter().enumerate() {
        w.write_record([i.to_string(), e.frame_index.to_string(), e.is_pseudo.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io("writing queue.csv", e))
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let input_dir = require(&cfg.io.input_dir, "--input-dir")?;
    let out_dir = require(&cfg.io.out_dir, "--out-dir")?;
    cfg.propagate.validate()?;
    let inputs = io::load_sequence(input_dir, &cfg.io.pattern)?;
    let references = load_references(cfg, inputs.len())?;
    let pv = PairedVideo::with_references(inputs, references)?;

    let layout = Layout::create(out_dir, false)?;
    write_manifest(&layout, "propagate", cfg.propagate.seed, cfg)?;
    let mut log = IterationLog::default();
    let (height, width, _) = pv.inputs().dims();
    let queue = if cfg.propagate.task == Task::Segmentation {
        let seg = propagate_segmentation(&pv, &cfg.net, &cfg.propagate, &mut log)?;
        for (t, mask) in seg.masks.iter().enumerate() {
            io::save_class_ids(mask, height, width, &layout.frames_main().join(io::frame_file_name(t)))?;
        }
        seg.queue
    } else {
        let run = propagate(&pv, &cfg.net, &cfg.propagate, &mut log)?;
        io::save_sequence(&run.outputs, &layout.frames_main())?;
        save_checkpoint(&run.state.net, &layout.checkpoints().join("propagation.dvpc"))?;
        run.queue
    };
    if let Some(q) = &queue {
        write_queue(q, &layout)?;
    }
    let mut w = csv::Writer::from_path(layout.metrics().join("iterations.csv"))?;
    w.write_record(["iteration", "frame", "loss"])?;
    for (it, frame, loss) in &log.0 {
        w.write_record([it.to_string(), frame.to_string(), loss.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io("writing iterations.csv", e))?;
    info!("wrote {}", layout.root.display());
    Ok(())
}
