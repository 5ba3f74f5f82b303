//! Low-dimensional toy experiment: eight nearby inputs regressed onto noisy
//! unimodal or bimodal targets, showing that outputs agree with each other
//! long before they fit the per-frame noise, and that dual-head training
//! locks the main head to one mode.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DvpError, Result};
use crate::losses::{irt_loss_tensor, Loss, LossKind};
use crate::nn::{fan_in_uniform, Adam, ConvDesc, ParamSet, Tape, Tensor};
use crate::plot;
use crate::trainer::compute_confidence_tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub n_frames: usize,
    pub input_dim: usize,
    /// Plots and CSV rows use the first two output coordinates.
    pub out_dim: usize,
    pub hidden: usize,
    /// Standard deviation of the target noise.
    pub noise_scale: f64,
    pub bimodal: bool,
    /// Distance between the two target centers.
    pub cluster_separation: f64,
    /// Spread of the inputs around their common center.
    pub input_spread: f64,
    pub iterations: usize,
    pub snapshot_iters: Vec<usize>,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub delta: f64,
    pub warmup_iterations: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_frames: 8,
            input_dim: 2,
            out_dim: 2,
            hidden: 32,
            noise_scale: 0.1,
            bimodal: false,
            cluster_separation: 2.0,
            input_spread: 0.05,
            iterations: 1000,
            snapshot_iters: vec![100, 200, 1000],
            learning_rate: 1e-3,
            loss: LossKind::L1,
            delta: 0.02,
            warmup_iterations: 50,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DvpError::Config(m.to_string()));
        if self.n_frames < 2 {
            return bad("toy needs at least two frames");
        }
        if self.input_dim == 0 || self.out_dim < 2 || self.hidden == 0 {
            return bad("toy input dim and hidden width must be positive and out dim at least 2");
        }
        if self.bimodal && self.n_frames % 2 != 0 {
            return bad("bimodal toy needs an even number of frames");
        }
        if !self.snapshot_iters.windows(2).all(|w| w[0] < w[1]) {
            return bad("snapshot iterations must be strictly increasing");
        }
        if self.snapshot_iters.last().is_some_and(|&s| s > self.iterations) {
            return bad("snapshot iterations must not exceed the iteration count");
        }
        if !matches!(self.loss, LossKind::L1 | LossKind::L2) {
            return bad("toy loss must be l1 or l2");
        }
        if !(self.noise_scale >= 0.0 && self.learning_rate > 0.0 && self.delta > 0.0) {
            return bad("noise scale must be non-negative, learning rate and delta positive");
        }
        Ok(())
    }
}

pub type Point = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub inputs: Vec<Point>,
    pub targets: Vec<Point>,
    /// One center (unimodal) or two; frame `t` belongs to `centers[t % 2]`
    /// in the bimodal case.
    pub centers: Vec<Point>,
}

impl ToyData {
    pub fn center_of(&self, t: usize) -> &Point {
        &self.centers[t % self.centers.len()]
    }
}

/// Inputs are nearby points; targets are their center(s) plus Gaussian
/// noise. Bimodal targets alternate between two centers frame by frame.
pub fn make_toy_data(cfg: &ToyConfig) -> Result<ToyData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base: Point = (0..cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let inputs = (0..cfg.n_frames)
        .map(|_| base.iter().map(|b| b + rng.gen_range(-cfg.input_spread..=cfg.input_spread)).collect())
        .collect();
    let mid: Point = (0..cfg.out_dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let centers = if cfg.bimodal {
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let half = cfg.cluster_separation / 2.0;
        let mut dir = vec![0.0; cfg.out_dim];
        dir[0] = angle.cos();
        dir[1] = angle.sin();
        vec![
            mid.iter().zip(&dir).map(|(m, d)| m + half * d).collect(),
            mid.iter().zip(&dir).map(|(m, d)| m - half * d).collect(),
        ]
    } else {
        vec![mid]
    };
    let noise = Normal::new(0.0, cfg.noise_scale).expect("finite noise scale");
    let targets = (0..cfg.n_frames)
        .map(|t| {
            let c: &Point = &centers[t % centers.len()];
            c.iter().map(|v| v + noise.sample(&mut rng)).collect()
        })
        .collect();
    Ok(ToyData {
        inputs,
        targets,
        centers,
    })
}

/// Two-hidden-layer perceptron written as 1x1 convolutions on 1x1 images.
struct ToyNet {
    params: ParamSet<f64>,
    layers: [ConvDesc; 3],
}

impl ToyNet {
    fn new(cfg: &ToyConfig, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamSet::new();
        let dims = [cfg.input_dim, cfg.hidden, cfg.hidden, cfg.out_dim * heads];
        let layers = std::array::from_fn(|i| {
            let (i_c, o_c) = (dims[i], dims[i + 1]);
            let weight = params.push(format!("fc{i}.weight"), vec![o_c, i_c, 1, 1], fan_in_uniform(rng, o_c * i_c, i_c));
            let bias = params.push(format!("fc{i}.bias"), vec![o_c], vec![0.0; o_c]);
            ConvDesc {
                weight,
                bias,
                in_channels: i_c,
                out_channels: o_c,
                kernel: 1,
            }
        });
        Self { params, layers }
    }

    fn record(&self, x: &Point) -> (Tape<'_, f64>, usize) {
        let mut tape = Tape::new(&self.params);
        let mut h = tape.input(Tensor::from_vec(x.len(), 1, 1, x.clone()), false);
        for (i, layer) in self.layers.iter().enumerate() {
            h = tape.conv(h, *layer);
            if i < 2 {
                h = tape.leaky_relu(h, 0.2);
            }
        }
        (tape, h)
    }

    fn forward(&self, x: &Point) -> Vec<f64> {
        let (tape, out) = self.record(x);
        tape.into_value(out).data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySnapshot {
    pub iteration: usize,
    pub main: Vec<Point>,
    /// Minor-head outputs for dual-head runs.
    pub minor: Option<Vec<Point>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrajectory {
    pub data: ToyData,
    pub irt: bool,
    pub snapshots: Vec<ToySnapshot>,
}

impl ToyTrajectory {
    pub fn snapshot(&self, iteration: usize) -> Option<&ToySnapshot> {
        self.snapshots.iter().find(|s| s.iteration == iteration)
    }

    /// Writes `<stem>.csv` with every snapshot and `<stem>_iter<N>.png`
    /// per snapshot. Returns the written paths.
    pub fn write_artifacts(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| DvpError::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let err = |e: csv::Error| DvpError::Data(format!("cannot write {}: {e}", csv_path.display()));
        let mut w = csv::Writer::from_path(&csv_path).map_err(err)?;
        w.write_record(["iteration", "frame_index", "head", "out_x", "out_y", "target_x", "target_y"])
            .map_err(err)?;
        let mut written = vec![csv_path.clone()];
        for snap in &self.snapshots {
            let heads = std::iter::once(("main", &snap.main)).chain(snap.minor.iter().map(|m| ("minor", m)));
            let mut points = Vec::new();
            for t in &self.data.targets {
                points.push((t[0], t[1], plot::GRAY));
            }
            for c in &self.data.centers {
                points.push((c[0], c[1], plot::RED));
            }
            for (name, outputs) in heads {
                let color = if name == "main" { plot::BLUE } else { plot::ORANGE };
                for (t, (o, target)) in outputs.iter().zip(&self.data.targets).enumerate() {
                    w.write_record([
                        snap.iteration.to_string(),
                        t.to_string(),
                        name.to_string(),
                        o[0].to_string(),
                        o[1].to_string(),
                        target[0].to_string(),
                        target[1].to_string(),
                    ])
                    .map_err(err)?;
                    points.push((o[0], o[1], color));
                }
            }
            let png = dir.join(format!("{stem}_iter{}.png", snap.iteration));
            plot::scatter_chart(&points, &png)?;
            written.push(png);
        }
        w.flush().map_err(|e| DvpError::io(&csv_path, e))?;
        Ok(written)
    }
}

/// Trains on one input/target pair per iteration (a seeded shuffle per pass
/// over the frames) and records outputs at the snapshot iterations. With
/// `irt`, both heads first regress frame 0's target, then pixels are routed
/// by the confidence rule.
pub fn run_toy(cfg: &ToyConfig, irt: bool) -> Result<ToyTrajectory> {
    let data = make_toy_data(cfg)?;
    let heads = if irt { 2 } else { 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut net = ToyNet::new(cfg, heads, &mut rng);
    let mut adam = Adam::new(&net.params, cfg.learning_rate);
    let mut grads = net.params.zeros_like();
    let loss = Loss::<f64>::simple(cfg.loss);
    let point = |p: &Point| Tensor::from_vec(p.len(), 1, 1, p.clone());

    let mut snapshots = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let warmup = if irt { cfg.warmup_iterations } else { 0 };
    for iteration in 1..=cfg.iterations {
        let t = if iteration <= warmup {
            0
        } else {
            if order.is_empty() {
                order = (0..cfg.n_frames).collect();
                order.shuffle(&mut rng);
            }
            order.pop().expect("refilled above")
        };
        grads.zero();
        let (tape, out) = net.record(&data.inputs[t]);
        let stacked = tape.value(out);
        let target = point(&data.targets[t]);
        let outs: Vec<Tensor<f64>> = (0..heads).map(|h| stacked.channel_slice(h * cfg.out_dim, cfg.out_dim)).collect();
        let head_grads = if !irt {
            vec![loss.evaluate(&outs[0], &target, None)?.grad]
        } else if iteration <= warmup {
            outs.iter()
                .map(|o| loss.evaluate(o, &target, None).map(|v| v.grad))
                .collect::<Result<Vec<_>>>()?
        } else {
            let conf = compute_confidence_tensor(&outs[0], &outs[1], &target, cfg.delta)?;
            let v = irt_loss_tensor(&outs[0], &outs[1], &target, &conf, &loss)?;
            vec![v.grad_main, v.grad_minor]
        };
        tape.backward(out, Tensor::concat_channels(&head_grads), Some(&mut grads));
        drop(tape);
        adam.step(&mut net.params, &grads);

        if cfg.snapshot_iters.contains(&iteration) {
            let all: Vec<Vec<f64>> = data.inputs.iter().map(|x| net.forward(x)).collect();
            let head = |h: usize| -> Vec<Point> { all.iter().map(|o| o[h * cfg.out_dim..(h + 1) * cfg.out_dim].to_vec()).collect() };
            snapshots.push(ToySnapshot {
                iteration,
                main: head(0),
                minor: irt.then(|| head(1)),
            });
        }
    }
    Ok(ToyTrajectory { data, irt, snapshots })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean pairwise Euclidean distance.
pub fn spread(points: &[Point]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            total += distance(&points[i], &points[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Mean per-coordinate absolute error between outputs and targets.
pub fn mean_l1(outputs: &[Point], targets: &[Point]) -> f64 {
    let n: usize = outputs.iter().map(Vec::len).sum();
    outputs
        .iter()
        .zip(targets)
        .flat_map(|(o, t)| o.iter().zip(t).map(|(a, b)| (a - b).abs()))
        .sum::<f64>()
        / n as f64
}

/// Euclidean distance from `p` to `center`.
pub fn distance_to(p: &[f64], center: &[f64]) -> f64 {
    distance(p, center)
}
