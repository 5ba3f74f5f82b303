use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::rules::{auto_stop_check, compute_confidence_tensor};
use crate::error::{DvpError, Result};
use crate::losses::{irt_loss_tensor, ConfidenceMap, Loss};
use crate::network::{load_checkpoint_for, pad_reflect_tensor, ConsistencyNet, CropRecord, NetSpec};
use crate::nn::{Adam, Gradients, Tensor};
use crate::video::{resize_frame, scaled_dims, Frame, PairedVideo, VideoSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Coarse,
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationEvent {
    /// 0 during warm-up, otherwise the 1-based epoch.
    pub epoch: usize,
    pub iteration: usize,
    pub phase: Phase,
    /// The single frame pair the step trained on.
    pub frame_index: usize,
    pub loss: f64,
}

#[derive(Debug)]
pub struct EpochEvent<'a> {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Main-head outputs on the probe frames, at full resolution.
    pub snapshots: &'a [(usize, Frame)],
}

/// Receives progress from a training run. Both methods default to no-ops.
pub trait TrainObserver {
    fn on_iteration(&mut self, _event: &IterationEvent) {}
    fn on_epoch(&mut self, _event: &EpochEvent<'_>) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochsExhausted,
    AutoStop,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::EpochsExhausted => "epochs_exhausted",
            StopReason::AutoStop => "auto_stop",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: ConsistencyNet<f32>,
    /// Completed epochs.
    pub epoch: usize,
    /// Gradient steps taken, warm-up included.
    pub iteration: usize,
    pub loss_history: Vec<f64>,
    pub stopped_reason: Option<StopReason>,
    /// First epoch at which the auto-stop rule fired, whether or not the
    /// run was configured to stop there.
    pub auto_stop_epoch: Option<usize>,
    optimizer: Adam<f32>,
}

impl TrainState {
    pub fn new(net: ConsistencyNet<f32>, learning_rate: f64) -> Self {
        let optimizer = Adam::new(net.params(), learning_rate);
        Self {
            net,
            epoch: 0,
            iteration: 0,
            loss_history: Vec::new(),
            stopped_reason: None,
            auto_stop_epoch: None,
            optimizer,
        }
    }

    /// One Adam step on a single (padded) input. `objective` receives the
    /// cropped per-head outputs and returns the loss with per-head gradients.
    pub(crate) fn step(
        &mut self,
        grads: &mut Gradients<f32>,
        input: &Tensor<f32>,
        crop: &CropRecord,
        objective: impl FnOnce(&[Tensor<f32>]) -> Result<(f64, Vec<Tensor<f32>>)>,
    ) -> Result<f64> {
        grads.zero();
        let (tape, out) = self.net.record(input.clone(), false)?;
        let heads = self.net.split_heads(&crop.crop_tensor(tape.value(out)));
        let (loss, head_grads) = objective(&heads)?;
        if !loss.is_finite() {
            return Err(DvpError::NonFinite(format!("loss became {loss} at iteration {}", self.iteration)));
        }
        let g = crop.uncrop_gradient(&Tensor::concat_channels(&head_grads));
        tape.backward(out, g, Some(grads));
        drop(tape);
        if !grads.is_finite() {
            return Err(DvpError::NonFinite(format!("non-finite gradient at iteration {}", self.iteration)));
        }
        self.optimizer.step(self.net.params_mut(), grads);
        self.iteration += 1;
        Ok(loss)
    }

    /// Main-head outputs (cropped) for a padded input.
    pub(crate) fn predict(&self, input: &Tensor<f32>, crop: &CropRecord) -> Result<Vec<Tensor<f32>>> {
        let out = self.net.forward_tensor(input.clone())?;
        Ok(self.net.split_heads(&crop.crop_tensor(&out)))
    }
}

/// Frame pairs converted to network tensors at one resolution.
pub(crate) struct Prepared {
    pub inputs: Vec<Tensor<f32>>,
    pub targets: Vec<Tensor<f32>>,
    pub crop: CropRecord,
}

impl Prepared {
    pub fn new(inputs: &[&Frame], targets: &[&Frame], multiple: usize, scale: f64) -> Result<Self> {
        let resize = |f: &Frame| -> Result<Frame> {
            if scale == 1.0 {
                return Ok(f.clone());
            }
            let (h, w) = scaled_dims(f.height(), f.width(), scale)?;
            Ok(resize_frame(f, h, w))
        };
        let mut crop = None;
        let mut xs = Vec::with_capacity(inputs.len());
        for f in inputs {
            let (x, record) = pad_reflect_tensor(&Tensor::from_frame(&resize(f)?), multiple);
            crop = Some(record);
            xs.push(x);
        }
        let ys = targets
            .iter()
            .map(|f| resize(f).map(|f| Tensor::from_frame(&f)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inputs: xs,
            targets: ys,
            crop: crop.ok_or_else(|| DvpError::Data("no frames to train on".into()))?,
        })
    }

    fn from_video(pv: &PairedVideo, multiple: usize, scale: f64) -> Result<Self> {
        let inputs: Vec<&Frame> = pv.inputs().iter().collect();
        let targets = pv
            .processed_slots()
            .iter()
            .enumerate()
            .map(|(t, p)| p.as_ref().ok_or_else(|| missing_processed(t)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(&inputs, &targets, multiple, scale)
    }
}

fn missing_processed(t: usize) -> DvpError {
    DvpError::Data(format!(
        "processed frame {t} is missing; consistency training needs every frame (use propagation for sparse references)"
    ))
}

/// Evenly spaced probe indices (first and last included).
pub fn probe_indices(len: usize, count: usize) -> Vec<usize> {
    match count.min(len) {
        0 => Vec::new(),
        1 => vec![0],
        n => {
            let mut v: Vec<usize> = (0..n).map(|i| (i * (len - 1) + (n - 1) / 2) / (n - 1)).collect();
            v.dedup();
            v
        }
    }
}

/// Network spec adapted to the video's channel counts and the head count
/// required by `cfg`.
pub fn spec_for(spec: &NetSpec, pv: &PairedVideo, cfg: &TrainConfig) -> NetSpec {
    NetSpec {
        in_channels: pv.inputs().dims().2,
        out_channels_per_head: pv.target_channels(),
        heads: cfg.heads(),
        ..spec.clone()
    }
}

pub(crate) fn initial_net(spec: &NetSpec, cfg: &TrainConfig) -> Result<ConsistencyNet<f32>> {
    spec.validate()?;
    match &cfg.init_checkpoint {
        Some(path) => load_checkpoint_for(path, spec),
        None => ConsistencyNet::build(spec.clone(), cfg.seed),
    }
}

/// Trains a consistency network on a fully paired video, one frame pair per
/// iteration.
///
/// Channel counts and the head count of `spec` are taken from the video and
/// from `cfg.irt`; the remaining fields (backbone, depth, width, activation)
/// are used as given.
pub fn train_dvp(
    pv: &PairedVideo,
    spec: &NetSpec,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainState> {
    cfg.validate()?;
    if !pv.is_fully_paired() {
        let t = pv.processed_slots().iter().position(Option::is_none).unwrap_or(0);
        return Err(missing_processed(t));
    }
    if cfg.irt && cfg.main_mode_frame >= pv.len() {
        return Err(main_frame_out_of_range(cfg.main_mode_frame, pv.len()));
    }
    let spec = spec_for(spec, pv, cfg);
    let net = initial_net(&spec, cfg)?;
    let loss = Loss::<f32>::from_config(&cfg.loss, pv.target_channels())?;
    let threshold = cfg.stop_threshold(loss.kind());
    let multiple = spec.multiple();

    let full = Prepared::from_video(pv, multiple, 1.0)?;
    let coarse_epochs = cfg.coarse_epochs();
    let coarse = if coarse_epochs > 0 && cfg.coarse_scale < 1.0 {
        Some(Prepared::from_video(pv, multiple, cfg.coarse_scale)?)
    } else {
        None
    };
    let probes = probe_indices(pv.len(), cfg.probe_frames);

    let mut state = TrainState::new(net, cfg.learning_rate);
    let mut grads = state.net.params().zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    if cfg.irt {
        let first = coarse.as_ref().unwrap_or(&full);
        warmup(&mut state, &mut grads, first, &loss, cfg, observer)?;
    }

    let mut order: Vec<usize> = (0..pv.len()).collect();
    for epoch in 1..=cfg.epochs {
        let (data, phase) = match &coarse {
            Some(c) if epoch <= coarse_epochs => (c, Phase::Coarse),
            _ => (&full, Phase::Full),
        };
        order.shuffle(&mut rng);
        let epoch_maps = if cfg.irt && cfg.confidence_per_epoch {
            Some(confidence_maps(&state, data, cfg.delta)?)
        } else {
            None
        };
        let mut total = 0.0;
        for &t in &order {
            let target = &data.targets[t];
            let value = state.step(&mut grads, &data.inputs[t], &data.crop, |heads| {
                if cfg.irt {
                    let conf = match &epoch_maps {
                        Some(maps) => maps[t].clone(),
                        None => compute_confidence_tensor(&heads[0], &heads[1], target, cfg.delta)?,
                    };
                    let v = irt_loss_tensor(&heads[0], &heads[1], target, &conf, &loss)?;
                    Ok((v.value, vec![v.grad_main, v.grad_minor]))
                } else {
                    let v = loss.evaluate(&heads[0], target, None)?;
                    Ok((v.value, vec![v.grad]))
                }
            })?;
            observer.on_iteration(&IterationEvent {
                epoch,
                iteration: state.iteration,
                phase,
                frame_index: t,
                loss: value,
            });
            total += value;
        }
        let mean_loss = total / pv.len() as f64;
        state.loss_history.push(mean_loss);
        state.epoch = epoch;

        let snapshots = probes
            .iter()
            .map(|&t| Ok((t, main_output(&state, &full, t)?)))
            .collect::<Result<Vec<_>>>()?;
        observer.on_epoch(&EpochEvent {
            epoch,
            mean_loss,
            snapshots: &snapshots,
        });

        if state.auto_stop_epoch.is_none() && auto_stop_check(&state.loss_history, cfg.auto_stop_window, threshold)? {
            state.auto_stop_epoch = Some(epoch);
            if cfg.auto_stop {
                state.stopped_reason = Some(StopReason::AutoStop);
                return Ok(state);
            }
        }
    }
    state.stopped_reason = Some(StopReason::EpochsExhausted);
    Ok(state)
}

fn main_frame_out_of_range(frame: usize, len: usize) -> DvpError {
    DvpError::Config(format!("main mode frame {frame} is out of range for a {len}-frame video"))
}

fn main_output(state: &TrainState, data: &Prepared, t: usize) -> Result<Frame> {
    Ok(state.predict(&data.inputs[t], &data.crop)?.swap_remove(0).to_frame())
}

fn confidence_maps(state: &TrainState, data: &Prepared, delta: f64) -> Result<Vec<ConfidenceMap>> {
    (0..data.inputs.len())
        .map(|t| {
            let heads = state.predict(&data.inputs[t], &data.crop)?;
            compute_confidence_tensor(&heads[0], &heads[1], &data.targets[t], delta)
        })
        .collect()
}

fn warmup(
    state: &mut TrainState,
    grads: &mut Gradients<f32>,
    data: &Prepared,
    loss: &Loss<f32>,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    let t = cfg.main_mode_frame;
    let target = &data.targets[t];
    for _ in 0..cfg.warmup_iterations {
        let value = state.step(grads, &data.inputs[t], &data.crop, |heads| {
            let mut total = 0.0;
            let mut out = Vec::with_capacity(heads.len());
            for h in heads {
                let v = loss.evaluate(h, target, None)?;
                total += v.value;
                out.push(v.grad);
            }
            Ok((total, out))
        })?;
        observer.on_iteration(&IterationEvent {
            epoch: 0,
            iteration: state.iteration,
            phase: Phase::Warmup,
            frame_index: t,
            loss: value,
        });
    }
    Ok(())
}

/// Trains every head on the main-mode frame pair for
/// `cfg.warmup_iterations` steps.
pub fn warmup_main_mode(mut state: TrainState, pv: &PairedVideo, cfg: &TrainConfig) -> Result<TrainState> {
    let t = cfg.main_mode_frame;
    if t >= pv.len() {
        return Err(main_frame_out_of_range(t, pv.len()));
    }
    if cfg.warmup_iterations == 0 {
        return Ok(state);
    }
    let target = pv.processed(t).ok_or_else(|| missing_processed(t))?;
    let data = Prepared::new(&[pv.inputs().frame(t)], &[target], state.net.spec().multiple(), 1.0)?;
    let pinned = TrainConfig {
        main_mode_frame: 0,
        ..cfg.clone()
    };
    let loss = Loss::<f32>::from_config(&cfg.loss, pv.target_channels())?;
    let mut grads = state.net.params().zeros_like();
    warmup(&mut state, &mut grads, &data, &loss, &pinned, &mut ())?;
    Ok(state)
}

/// Per-head output sequences of a trained network.
#[derive(Debug, Clone)]
pub struct Inference {
    pub main: VideoSequence,
    /// Present for dual-head networks.
    pub minor: Option<VideoSequence>,
}

/// Runs the network on every frame, in order.
pub fn infer_video(state: &TrainState, inputs: &VideoSequence) -> Result<Inference> {
    infer_with(&state.net, inputs)
}

pub fn infer_with(net: &ConsistencyNet<f32>, inputs: &VideoSequence) -> Result<Inference> {
    let mut main = Vec::with_capacity(inputs.len());
    let mut minor = Vec::new();
    for frame in inputs.iter() {
        let mut heads = net.forward_padded(frame)?.into_iter();
        main.push(heads.next().expect("at least one head"));
        minor.extend(heads.next());
    }
    let rate = inputs.frame_rate();
    let wrap = |frames: Vec<Frame>| -> Result<VideoSequence> {
        let v = VideoSequence::new(frames)?;
        Ok(match rate {
            Some(r) => v.with_frame_rate(r),
            None => v,
        })
    };
    Ok(Inference {
        main: wrap(main)?,
        minor: if minor.is_empty() { None } else { Some(wrap(minor)?) },
    })
}
