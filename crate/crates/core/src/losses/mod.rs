//! Data-term losses, the per-pixel distance used for confidence maps, and the
//! confidence-reweighted two-head loss.
//!
//! Every loss returns its value together with the gradient with respect to
//! the prediction. A per-pixel binary weight restricts the loss to the
//! selected pixels and normalizes by their count, so an all-ones weight is
//! the plain loss and an all-zeros weight contributes nothing.

mod perceptual;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use perceptual::{FeatureExtractor, DEFAULT_LAYERS};

use crate::error::{DvpError, Result};
use crate::nn::{Scalar, Tensor};
use crate::video::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    L2,
    /// Pixel L1 plus L1 between frozen classifier features.
    Perceptual,
    /// Targets are per-pixel class distributions; predictions probabilities.
    CrossEntropy,
}

impl std::str::FromStr for LossKind {
    type Err = DvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            "perceptual" => Ok(LossKind::Perceptual),
            "cross_entropy" => Ok(LossKind::CrossEntropy),
            other => Err(DvpError::Config(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Feature layers compared by the perceptual loss.
    #[serde(default)]
    pub perceptual_layers: Vec<String>,
    /// Weight of the feature term relative to the pixel term.
    #[serde(default)]
    pub perceptual_weight: f64,
    /// Extractor weights file; required for the perceptual loss to take effect.
    #[serde(default)]
    pub feature_weights: Option<PathBuf>,
}

impl LossConfig {
    pub fn l1() -> Self {
        Self::simple(LossKind::L1)
    }

    pub fn l2() -> Self {
        Self::simple(LossKind::L2)
    }

    pub fn cross_entropy() -> Self {
        Self::simple(LossKind::CrossEntropy)
    }

    pub fn perceptual(feature_weights: Option<PathBuf>) -> Self {
        Self {
            kind: LossKind::Perceptual,
            perceptual_layers: DEFAULT_LAYERS.iter().map(|s| s.to_string()).collect(),
            perceptual_weight: 1.0,
            feature_weights,
        }
    }

    fn simple(kind: LossKind) -> Self {
        Self {
            kind,
            perceptual_layers: Vec::new(),
            perceptual_weight: 0.0,
            feature_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let perceptual = self.kind == LossKind::Perceptual;
        let has_fields = !self.perceptual_layers.is_empty() || self.perceptual_weight != 0.0;
        if perceptual && (self.perceptual_layers.is_empty() || !(self.perceptual_weight > 0.0)) {
            return Err(DvpError::Config(
                "perceptual loss needs layers and a positive weight".into(),
            ));
        }
        if !perceptual && has_fields {
            return Err(DvpError::Config(
                "perceptual fields are only valid with the perceptual loss".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::l1()
    }
}

/// Binary per-pixel selector (`H x W x 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfidenceMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl ConfidenceMap {
    pub fn from_bools(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(DvpError::ShapeMismatch(format!(
                "{} mask values for {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    /// Accepts only exact zeros and ones.
    pub fn from_values(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(DvpError::Data(format!("confidence weight {v} is not binary")));
        }
        Self::from_bools(height, width, values.iter().map(|&v| v == 1.0).collect())
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn selected(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    /// As a single-channel frame of zeros and ones.
    pub fn to_frame(&self) -> Frame {
        Frame::from_fn(self.height, self.width, 1, |y, x, _| f64::from(u8::from(self.get(y, x))))
    }
}

/// Loss value and gradient with respect to the prediction.
#[derive(Debug, Clone)]
pub struct LossValue<T> {
    pub value: f64,
    pub grad: Tensor<T>,
}

/// Value of the two-head loss and the gradient for each head.
#[derive(Debug, Clone)]
pub struct IrtLossValue<T> {
    pub value: f64,
    pub grad_main: Tensor<T>,
    pub grad_minor: Tensor<T>,
}

struct Perceptual<T: Scalar> {
    extractor: FeatureExtractor<T>,
    layers: Vec<String>,
    weight: f64,
}

/// A ready-to-evaluate data loss (with its feature extractor, if any).
pub struct Loss<T: Scalar> {
    kind: LossKind,
    perceptual: Option<Perceptual<T>>,
}

const CE_FLOOR: f64 = 1e-12;

impl<T: Scalar> Loss<T> {
    /// Builds the loss described by `cfg` for images with `channels` channels.
    ///
    /// A perceptual loss whose weights file is absent degrades to L1 with a
    /// warning.
    pub fn from_config(cfg: &LossConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        match cfg.kind {
            LossKind::Perceptual => match cfg.feature_weights.as_ref().filter(|p| p.is_file()) {
                Some(path) => {
                    let extractor = FeatureExtractor::load(path, channels)?;
                    Self::perceptual(extractor, cfg.perceptual_layers.clone(), cfg.perceptual_weight)
                }
                None => {
                    log::warn!(
                        "feature extractor weights {:?} not found; using L1 loss instead of perceptual",
                        cfg.feature_weights
                    );
                    Ok(Self::simple(LossKind::L1))
                }
            },
            kind => Ok(Self::simple(kind)),
        }
    }

    pub fn simple(kind: LossKind) -> Self {
        assert_ne!(kind, LossKind::Perceptual, "perceptual loss needs an extractor");
        Self {
            kind,
            perceptual: None,
        }
    }

    pub fn perceptual(extractor: FeatureExtractor<T>, layers: Vec<String>, weight: f64) -> Result<Self> {
        if let Some(l) = layers.iter().find(|l| !extractor.has_layer(l)) {
            return Err(DvpError::Config(format!("extractor has no layer `{l}`")));
        }
        Ok(Self {
            kind: LossKind::Perceptual,
            perceptual: Some(Perceptual {
                extractor,
                layers,
                weight,
            }),
        })
    }

    /// The loss actually evaluated (after any fallback).
    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Evaluates the (optionally masked) loss between two same-shape tensors.
    pub fn evaluate(&self, pred: &Tensor<T>, target: &Tensor<T>, weight: Option<&ConfidenceMap>) -> Result<LossValue<T>> {
        if !pred.same_shape(target) {
            return Err(DvpError::ShapeMismatch(format!(
                "prediction {}x{}x{} vs target {}x{}x{}",
                pred.height, pred.width, pred.channels, target.height, target.width, target.channels
            )));
        }
        if let Some(w) = weight {
            if (w.height(), w.width()) != (pred.height, pred.width) {
                return Err(DvpError::ShapeMismatch(format!(
                    "weight map {}x{} vs prediction {}x{}",
                    w.height(),
                    w.width(),
                    pred.height,
                    pred.width
                )));
            }
        }
        let selected = weight.map_or(pred.plane_len(), ConfidenceMap::selected);
        if selected == 0 {
            return Ok(LossValue {
                value: 0.0,
                grad: Tensor::zeros(pred.channels, pred.height, pred.width),
            });
        }
        match self.kind {
            LossKind::L1 => Ok(pointwise(pred, target, weight, selected, |d| (d.abs(), sign(d)))),
            LossKind::L2 => Ok(pointwise(pred, target, weight, selected, |d| (d * d, 2.0 * d))),
            LossKind::CrossEntropy => Ok(cross_entropy(pred, target, weight, selected)),
            LossKind::Perceptual => {
                let p = self.perceptual.as_ref().expect("perceptual loss has extractor");
                let mut out = pointwise(pred, target, weight, selected, |d| (d.abs(), sign(d)));
                let (value, grad) = feature_term(p, pred, target, weight)?;
                out.value += value;
                out.grad.data.iter_mut().zip(&grad.data).for_each(|(a, &b)| *a += b);
                Ok(out)
            }
        }
    }
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Masked mean of `f(pred - target)` over selected pixels and all channels.
fn pointwise<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weight: Option<&ConfidenceMap>,
    selected: usize,
    f: impl Fn(f64) -> (f64, f64),
) -> LossValue<T> {
    let n = pred.plane_len();
    let denom = (selected * pred.channels) as f64;
    let mut grad = Tensor::zeros(pred.channels, pred.height, pred.width);
    let mut total = 0.0;
    for (i, (&p, &t)) in pred.data.iter().zip(&target.data).enumerate() {
        if weight.is_some_and(|w| !w.as_slice()[i % n]) {
            continue;
        }
        let (v, g) = f(p.f64() - t.f64());
        total += v;
        grad.data[i] = T::of(g / denom);
    }
    LossValue {
        value: total / denom,
        grad,
    }
}

/// `-mean_pixels sum_k target_k ln(pred_k)` over selected pixels.
fn cross_entropy<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weight: Option<&ConfidenceMap>,
    selected: usize,
) -> LossValue<T> {
    let n = pred.plane_len();
    let denom = selected as f64;
    let mut grad = Tensor::zeros(pred.channels, pred.height, pred.width);
    let mut total = 0.0;
    for (i, (&p, &t)) in pred.data.iter().zip(&target.data).enumerate() {
        if weight.is_some_and(|w| !w.as_slice()[i % n]) {
            continue;
        }
        let (p, t) = (p.f64(), t.f64());
        if t == 0.0 {
            continue;
        }
        let pc = p.max(CE_FLOOR);
        total -= t * pc.ln();
        if p > CE_FLOOR {
            grad.data[i] = T::of(-t / (p * denom));
        }
    }
    LossValue {
        value: total / denom,
        grad,
    }
}

fn masked<T: Scalar>(x: &Tensor<T>, weight: Option<&ConfidenceMap>) -> Tensor<T> {
    let Some(w) = weight else { return x.clone() };
    let n = x.plane_len();
    let mut out = x.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        if !w.as_slice()[i % n] {
            *v = T::zero();
        }
    }
    out
}

fn feature_term<T: Scalar>(
    p: &Perceptual<T>,
    pred: &Tensor<T>,
    target: &Tensor<T>,
    weight: Option<&ConfidenceMap>,
) -> Result<(f64, Tensor<T>)> {
    let pm = masked(pred, weight);
    let tm = masked(target, weight);
    let target_feats: Vec<Tensor<T>> = {
        let (tape, nodes) = p.extractor.record(tm, &p.layers, false)?;
        nodes.iter().map(|&n| tape.value(n).clone()).collect()
    };
    let (tape, nodes) = p.extractor.record(pm, &p.layers, true)?;
    let mut value = 0.0;
    let mut seeds = Vec::with_capacity(nodes.len());
    for (&node, tf) in nodes.iter().zip(&target_feats) {
        let pf = tape.value(node);
        let count = pf.data.len() as f64;
        let mut g = Tensor::zeros(pf.channels, pf.height, pf.width);
        for (i, (&a, &b)) in pf.data.iter().zip(&tf.data).enumerate() {
            let d = a.f64() - b.f64();
            value += p.weight * d.abs() / count;
            g.data[i] = T::of(p.weight * sign(d) / count);
        }
        seeds.push((node, g));
    }
    let grad = tape
        .backward_from(seeds, None)
        .expect("extractor input requires grad");
    Ok((value, masked(&grad, weight)))
}

/// Frame-level data loss; see [`Loss::evaluate`].
pub fn data_loss(pred: &Frame, target: &Frame, loss: &Loss<f64>, weight: Option<&ConfidenceMap>) -> Result<LossValue<f64>> {
    loss.evaluate(&Tensor::from_frame(pred), &Tensor::from_frame(target), weight)
}

/// Per-pixel channel-mean absolute difference, row-major.
pub fn pixel_distance_tensor<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<f64>> {
    if !a.same_shape(b) {
        return Err(DvpError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    let n = a.plane_len();
    let mut out = vec![0.0; n];
    for c in 0..a.channels {
        for i in 0..n {
            out[i] += (a.data[c * n + i].f64() - b.data[c * n + i].f64()).abs();
        }
    }
    let c = a.channels as f64;
    out.iter_mut().for_each(|v| *v /= c);
    Ok(out)
}

/// Per-pixel channel-mean L1 distance as a single-channel frame.
pub fn pixel_distance(a: &Frame, b: &Frame) -> Result<Frame> {
    let d = pixel_distance_tensor(&Tensor::<f64>::from_frame(a), &Tensor::from_frame(b))?;
    Frame::new(a.height(), a.width(), 1, d)
}

/// Main head on confident pixels plus minor head on the rest.
pub fn irt_loss_tensor<T: Scalar>(
    main: &Tensor<T>,
    minor: &Tensor<T>,
    target: &Tensor<T>,
    conf: &ConfidenceMap,
    loss: &Loss<T>,
) -> Result<IrtLossValue<T>> {
    let a = loss.evaluate(main, target, Some(conf))?;
    let b = loss.evaluate(minor, target, Some(&conf.complement()))?;
    Ok(IrtLossValue {
        value: a.value + b.value,
        grad_main: a.grad,
        grad_minor: b.grad,
    })
}

pub fn irt_loss(main: &Frame, minor: &Frame, target: &Frame, conf: &ConfidenceMap, loss: &Loss<f64>) -> Result<IrtLossValue<f64>> {
    irt_loss_tensor(
        &Tensor::from_frame(main),
        &Tensor::from_frame(minor),
        &Tensor::from_frame(target),
        conf,
        loss,
    )
}
