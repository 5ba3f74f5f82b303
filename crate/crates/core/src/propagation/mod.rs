//! Propagating reference-frame edits (color, style, segmentation) to a whole
//! video by training only on the references, optionally growing the training
//! set with the network's own predictions frame by frame.

mod augment;

pub use augment::{augment, flip_horizontal, rotate90, AugmentSpec, Augmentation};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DvpError, Result};
use crate::losses::{LossConfig, LossKind, Loss};
use crate::network::{pad_reflect_tensor, FinalActivation, NetSpec};
use crate::nn::Tensor;
use crate::trainer::{infer_video, initial_net, IterationEvent, Phase, TrainConfig, TrainObserver, TrainState};
use crate::video::{Frame, LabelMap, PairedVideo, VideoSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Color,
    Style,
    Segmentation,
}

/// How training samples are drawn from the memory queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueSampling {
    #[default]
    Uniform,
    /// Entry `i` (0-based) is drawn with weight `i + 1`.
    Recency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub task: Task,
    /// Training iterations per queue step.
    pub k: usize,
    /// Grow the training set with pseudo labels; otherwise train on the
    /// references only.
    pub pppl: bool,
    /// Reference-only iteration budget; `None` uses `(T - 1) * k`.
    pub iterations: Option<usize>,
    pub augmentations: Vec<Augmentation>,
    pub crop_size: Option<(usize, usize)>,
    pub sampling: QueueSampling,
    /// Re-run inference on every frame after the last step instead of
    /// returning the stored pseudo labels.
    pub reinfer: bool,
    pub learning_rate: f64,
    /// Ignored for segmentation, which always uses cross-entropy.
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            task: Task::Color,
            k: 100,
            pppl: true,
            iterations: None,
            augmentations: vec![Augmentation::Flip],
            crop_size: None,
            sampling: QueueSampling::Uniform,
            reinfer: false,
            learning_rate: 1e-4,
            loss: LossConfig::l1(),
            seed: 0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(DvpError::Config("K (iterations per step) must be at least 1".into()));
        }
        if self.augmentations.contains(&Augmentation::CopyPaste) && self.task != Task::Segmentation {
            return Err(DvpError::Config("copy_paste augmentation is only valid for segmentation".into()));
        }
        if self.augmentations.contains(&Augmentation::Crop) && self.crop_size.is_none() {
            return Err(DvpError::Config("crop augmentation needs crop_size".into()));
        }
        if self.iterations == Some(0) {
            return Err(DvpError::Config("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(DvpError::Config("learning rate must be positive".into()));
        }
        self.loss.validate()
    }

    fn augment_spec(&self) -> AugmentSpec {
        AugmentSpec {
            augmentations: self.augmentations.clone(),
            crop_size: self.crop_size,
        }
    }

    fn effective_loss(&self) -> LossConfig {
        match self.task {
            Task::Segmentation => LossConfig::cross_entropy(),
            _ => self.loss.clone(),
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            loss: self.effective_loss(),
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub frame_index: usize,
    pub input: Frame,
    pub target: Frame,
    pub is_pseudo: bool,
}

/// Training pairs: the true reference first, then one pseudo-labelled frame
/// per propagation step.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryQueue {
    entries: Vec<QueueEntry>,
}

impl MemoryQueue {
    pub fn new(frame_index: usize, input: Frame, target: Frame) -> Self {
        Self {
            entries: vec![QueueEntry {
                frame_index,
                input,
                target,
                is_pseudo: false,
            }],
        }
    }

    pub fn push_pseudo(&mut self, frame_index: usize, input: Frame, target: Frame) {
        self.entries.push(QueueEntry {
            frame_index,
            input,
            target,
            is_pseudo: true,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    fn sample(&self, sampling: QueueSampling, rng: &mut impl Rng) -> usize {
        let n = self.entries.len();
        match sampling {
            QueueSampling::Uniform => rng.gen_range(0..n),
            QueueSampling::Recency => {
                let mut r = rng.gen_range(0..n * (n + 1) / 2);
                for i in 0..n {
                    if r <= i {
                        return i;
                    }
                    r -= i + 1;
                }
                n - 1
            }
        }
    }
}

/// Spec adapted to the video's channels with a single head; segmentation
/// forces a softmax output.
fn propagation_spec(spec: &NetSpec, pv: &PairedVideo, cfg: &PropagationConfig) -> NetSpec {
    NetSpec {
        in_channels: pv.inputs().dims().2,
        out_channels_per_head: pv.target_channels(),
        heads: 1,
        final_activation: if cfg.task == Task::Segmentation {
            FinalActivation::Softmax
        } else {
            spec.final_activation
        },
        ..spec.clone()
    }
}

struct Session {
    state: TrainState,
    loss: Loss<f32>,
    rng: ChaCha8Rng,
    grads: crate::nn::Gradients<f32>,
    augment: AugmentSpec,
    multiple: usize,
}

impl Session {
    fn new(pv: &PairedVideo, spec: &NetSpec, cfg: &PropagationConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = propagation_spec(spec, pv, cfg);
        let tc = cfg.train_config();
        let net = initial_net(&spec, &tc)?;
        let loss = Loss::from_config(&tc.loss, pv.target_channels())?;
        let grads = net.params().zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(3);
        Ok(Self {
            state: TrainState::new(net, cfg.learning_rate),
            loss,
            rng,
            grads,
            augment: cfg.augment_spec(),
            multiple: spec.multiple(),
        })
    }

    fn train_on(&mut self, input: &Frame, target: &Frame) -> Result<f64> {
        let (x, y) = augment(input, target, &self.augment, &mut self.rng)?;
        let (padded, crop) = pad_reflect_tensor(&Tensor::<f32>::from_frame(&x), self.multiple);
        let target = Tensor::from_frame(&y);
        let loss = &self.loss;
        self.state.step(&mut self.grads, &padded, &crop, |heads| {
            let v = loss.evaluate(&heads[0], &target, None)?;
            Ok((v.value, vec![v.grad]))
        })
    }

    fn predict(&self, frame: &Frame) -> Result<Frame> {
        Ok(self.state.net.forward_padded(frame)?.swap_remove(0))
    }
}

/// Trains on the reference pairs only (one uniformly drawn, augmented pair
/// per iteration) for `iterations` steps.
pub fn train_reference_only(
    pv: &PairedVideo,
    spec: &NetSpec,
    cfg: &PropagationConfig,
    iterations: usize,
    observer: &mut dyn TrainObserver,
) -> Result<TrainState> {
    let refs = pv.reference_indices();
    if refs.is_empty() {
        return Err(DvpError::Config("propagation needs at least one reference frame".into()));
    }
    let mut session = Session::new(pv, spec, cfg)?;
    for _ in 0..iterations {
        let t = refs[session.rng.gen_range(0..refs.len())];
        let target = pv.processed(t).expect("reference index has a target");
        let loss = session.train_on(pv.inputs().frame(t), target)?;
        observer.on_iteration(&IterationEvent {
            epoch: 1,
            iteration: session.state.iteration,
            phase: Phase::Full,
            frame_index: t,
            loss,
        });
    }
    session.state.epoch = 1;
    Ok(session.state)
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub outputs: VideoSequence,
    /// Only for progressive runs.
    pub queue: Option<MemoryQueue>,
    pub state: TrainState,
}

fn single_first_reference(pv: &PairedVideo) -> Result<()> {
    match pv.reference_indices() {
        [] => Err(DvpError::Config("propagation needs a reference frame".into())),
        [0] => Ok(()),
        [r] => Err(DvpError::Config(format!(
            "progressive propagation needs the reference on the first frame, got frame {r}"
        ))),
        many => Err(DvpError::Config(format!(
            "progressive propagation supports a single reference; got {} (train on references only instead)",
            many.len()
        ))),
    }
}

/// Progressive propagation with pseudo labels: after `k` iterations on the
/// queue, the next frame's prediction joins the queue as its target.
pub fn propagate_pppl(
    pv: &PairedVideo,
    spec: &NetSpec,
    cfg: &PropagationConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Propagation> {
    single_first_reference(pv)?;
    if pv.len() < 2 {
        return Err(DvpError::Data("progressive propagation needs at least two frames".into()));
    }
    let mut session = Session::new(pv, spec, cfg)?;
    let inputs = pv.inputs();
    let reference = pv.processed(0).expect("reference checked above").clone();
    let mut queue = MemoryQueue::new(0, inputs.frame(0).clone(), reference);
    for next in 1..pv.len() {
        for _ in 0..cfg.k {
            let i = queue.sample(cfg.sampling, &mut session.rng);
            let entry = &queue.entries()[i];
            let loss = session.train_on(&entry.input, &entry.target)?;
            observer.on_iteration(&IterationEvent {
                epoch: next,
                iteration: session.state.iteration,
                phase: Phase::Full,
                frame_index: entry.frame_index,
                loss,
            });
        }
        let label = session.predict(inputs.frame(next))?;
        queue.push_pseudo(next, inputs.frame(next).clone(), label);
        session.state.epoch = next;
    }
    let outputs = if cfg.reinfer {
        infer_video(&session.state, inputs)?.main
    } else {
        let mut frames = vec![session.predict(inputs.frame(0))?];
        frames.extend(queue.entries()[1..].iter().map(|e| e.target.clone()));
        VideoSequence::new(frames)?
    };
    Ok(Propagation {
        outputs,
        queue: Some(queue),
        state: session.state,
    })
}

/// Progressive or reference-only propagation, as configured.
pub fn propagate(
    pv: &PairedVideo,
    spec: &NetSpec,
    cfg: &PropagationConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Propagation> {
    if cfg.pppl {
        return propagate_pppl(pv, spec, cfg, observer);
    }
    let iterations = cfg.iterations.unwrap_or(pv.len().saturating_sub(1).max(1) * cfg.k);
    let state = train_reference_only(pv, spec, cfg, iterations, observer)?;
    let outputs = infer_video(&state, pv.inputs())?.main;
    Ok(Propagation {
        outputs,
        queue: None,
        state,
    })
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: Vec<LabelMap>,
    /// Per-pixel argmax class ids.
    pub masks: Vec<Vec<u8>>,
    pub queue: Option<MemoryQueue>,
}

/// Segmentation propagation with a softmax head and cross-entropy loss.
pub fn propagate_segmentation(
    pv: &PairedVideo,
    spec: &NetSpec,
    cfg: &PropagationConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Segmentation> {
    if cfg.task != Task::Segmentation {
        return Err(DvpError::Config("segmentation propagation needs task = segmentation".into()));
    }
    cfg.validate()?;
    for &r in pv.reference_indices() {
        LabelMap::new(pv.processed(r).expect("reference has a target").clone())
            .map_err(|e| DvpError::Data(format!("reference {r} is not a label map: {e}")))?;
    }
    let run = propagate(pv, spec, cfg, observer)?;
    let labels = run
        .outputs
        .iter()
        .map(|f| LabelMap::new(renormalize(f)))
        .collect::<Result<Vec<_>>>()?;
    let masks = labels.iter().map(LabelMap::argmax).collect();
    Ok(Segmentation {
        labels,
        masks,
        queue: run.queue,
    })
}

/// Rescales each pixel's class probabilities to sum to one.
fn renormalize(f: &Frame) -> Frame {
    let n = f.pixel_count();
    let sums: Vec<f64> = (0..n).map(|i| (0..f.channels()).map(|c| f.plane(c)[i]).sum()).collect();
    Frame::from_fn(f.height(), f.width(), f.channels(), |y, x, c| {
        let i = y * f.width() + x;
        if sums[i] > 0.0 {
            f.plane(c)[i] / sums[i]
        } else {
            f64::from(u8::from(c == 0))
        }
    })
}

/// Loss kind actually used for a propagation task.
pub fn task_loss(cfg: &PropagationConfig) -> LossKind {
    cfg.effective_loss().kind
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetSpec {
        NetSpec::image(3, 3).with_width(2, 8)
    }

    fn video(t: usize) -> VideoSequence {
        VideoSequence::new(
            (0..t)
                .map(|i| Frame::from_fn(16, 16, 3, |y, x, c| ((y * 3 + x * 5 + c * 2 + i) % 9) as f64 / 9.0))
                .collect(),
        )
        .unwrap()
    }

    #[derive(Default)]
    struct Seen(Vec<(usize, usize)>);

    impl TrainObserver for Seen {
        fn on_iteration(&mut self, e: &IterationEvent) {
            self.0.push((e.epoch, e.frame_index));
        }
    }

    #[test]
    fn queue_grows_by_one_per_step() {
        let v = video(4);
        let pv = PairedVideo::with_references(v.clone(), vec![(0, v.frame(0).clone())]).unwrap();
        let cfg = PropagationConfig {
            k: 3,
            ..Default::default()
        };
        let mut seen = Seen::default();
        let run = propagate_pppl(&pv, &tiny(), &cfg, &mut seen).unwrap();
        let q = run.queue.unwrap();
        assert_eq!(q.len(), 4);
        assert!(!q.entries()[0].is_pseudo && q.entries()[1..].iter().all(|e| e.is_pseudo));
        assert_eq!(run.state.iteration, 9);
        assert_eq!(run.outputs.len(), 4);
        // step `next` only trains on frames already in the queue
        assert!(seen.0.iter().all(|&(next, f)| f < next));
    }

    #[test]
    fn multiple_references_are_rejected() {
        let v = video(4);
        let refs = vec![(0, v.frame(0).clone()), (2, v.frame(2).clone())];
        let pv = PairedVideo::with_references(v, refs).unwrap();
        let err = propagate_pppl(&pv, &tiny(), &PropagationConfig::default(), &mut ()).unwrap_err();
        assert!(err.to_string().contains("single reference"), "{err}");
    }

    #[test]
    fn reference_only_training_touches_references_only() {
        let v = video(5);
        let refs = vec![(1, v.frame(1).clone()), (3, v.frame(3).clone())];
        let pv = PairedVideo::with_references(v, refs).unwrap();
        let mut seen = Seen::default();
        let cfg = PropagationConfig::default();
        train_reference_only(&pv, &tiny(), &cfg, 12, &mut seen).unwrap();
        assert_eq!(seen.0.len(), 12);
        assert!(seen.0.iter().all(|&(_, f)| f == 1 || f == 3));
    }

    #[test]
    fn config_invariants() {
        let cfg = PropagationConfig {
            augmentations: vec![Augmentation::CopyPaste],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PropagationConfig {
            k: 0,
            task: Task::Segmentation,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn recency_sampling_prefers_late_entries() {
        let f = Frame::filled(8, 8, 1, 0.0);
        let mut q = MemoryQueue::new(0, f.clone(), f.clone());
        for t in 1..4 {
            q.push_pseudo(t, f.clone(), f.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            counts[q.sample(QueueSampling::Recency, &mut rng)] += 1;
        }
        assert!(counts[3] > counts[0] * 3);
    }
}
