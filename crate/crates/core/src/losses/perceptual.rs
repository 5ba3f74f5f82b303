//! Frozen VGG-style feature extractor for perceptual losses.
//!
//! Weights come from a container file (see [`crate::network::encode_container`])
//! holding arrays named `conv1_1.weight`, `conv1_1.bias`, ... in the VGG16
//! naming scheme. The ImageNet input normalization is folded into the first
//! convolution so the extractor consumes raw `[0, 1]` images; single-channel
//! inputs are handled by summing the first layer's color filters.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DvpError, Result};
use crate::network::decode_container;
use crate::nn::{fan_in_uniform, ConvDesc, NodeId, ParamSet, Scalar, Tape, Tensor};

/// Convolution names per pooling stage.
const STAGES: [&[&str]; 3] = [
    &["conv1_1", "conv1_2"],
    &["conv2_1", "conv2_2"],
    &["conv3_1", "conv3_2", "conv3_3"],
];

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

pub const DEFAULT_LAYERS: [&str; 3] = ["conv1_2", "conv2_2", "conv3_2"];

#[derive(Debug, Clone)]
pub struct FeatureExtractor<T: Scalar> {
    params: ParamSet<T>,
    /// `(name, conv)` in execution order.
    convs: Vec<(String, ConvDesc)>,
    input_channels: usize,
}

fn all_layer_names() -> impl Iterator<Item = &'static str> {
    STAGES.iter().flat_map(|s| s.iter().copied())
}

impl<T: Scalar> FeatureExtractor<T> {
    /// Loads VGG weights from `path`, adapted to `input_channels` (1 or 3).
    pub fn load(path: &Path, input_channels: usize) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| DvpError::io(path, e))?;
        let (_, _, params) = decode_container::<T>(&bytes)?;
        Self::from_params(params, input_channels)
    }

    /// Randomly initialized extractor with the given stage widths (for tests
    /// and benchmarks).
    pub fn random(seed: u64, widths: [usize; 3], input_channels: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut in_c = 3;
        for (stage, names) in STAGES.iter().enumerate() {
            for name in names.iter() {
                let out_c = widths[stage];
                let fan_in = in_c * 9;
                params.push(
                    format!("{name}.weight"),
                    vec![out_c, in_c, 3, 3],
                    fan_in_uniform(&mut rng, out_c * fan_in, fan_in),
                );
                params.push(format!("{name}.bias"), vec![out_c], vec![T::zero(); out_c]);
                in_c = out_c;
            }
        }
        Self::from_params(params, input_channels)
    }

    fn from_params(raw: ParamSet<T>, input_channels: usize) -> Result<Self> {
        if input_channels != 1 && input_channels != 3 {
            return Err(DvpError::Config(format!(
                "perceptual loss needs 1- or 3-channel images, got {input_channels}"
            )));
        }
        let mut params = ParamSet::new();
        let mut convs = Vec::new();
        let mut expected_in = 3;
        for name in all_layer_names() {
            let (Some(wi), Some(bi)) = (
                raw.index_of(&format!("{name}.weight")),
                raw.index_of(&format!("{name}.bias")),
            ) else {
                // Truncated extractors (fewer stages) are fine.
                break;
            };
            let shape = raw.shape(wi).to_vec();
            if shape.len() != 4 || shape[1] != expected_in || shape[2] != 3 || shape[3] != 3 {
                return Err(DvpError::Config(format!("feature layer {name} has shape {shape:?}")));
            }
            let out_c = shape[0];
            let mut weight = raw.get(wi).to_vec();
            let mut bias = raw.get(bi).to_vec();
            let mut in_c = expected_in;
            if name == "conv1_1" {
                (weight, bias) = fold_normalization(&weight, &bias, out_c, input_channels);
                in_c = input_channels;
            }
            let w = params.push(format!("{name}.weight"), vec![out_c, in_c, 3, 3], weight);
            let b = params.push(format!("{name}.bias"), vec![out_c], bias);
            convs.push((
                name.to_string(),
                ConvDesc {
                    weight: w,
                    bias: b,
                    in_channels: in_c,
                    out_channels: out_c,
                    kernel: 3,
                },
            ));
            expected_in = out_c;
        }
        if convs.is_empty() {
            return Err(DvpError::Config("feature extractor file holds no conv1_1 layer".into()));
        }
        Ok(Self {
            params,
            convs,
            input_channels,
        })
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn has_layer(&self, name: &str) -> bool {
        self.convs.iter().any(|(n, _)| n == name)
    }

    /// Runs up to the deepest requested layer; returns the tape and the
    /// post-activation node for each requested layer (in request order).
    pub fn record(&self, x: Tensor<T>, layers: &[String], input_grad: bool) -> Result<(Tape<'_, T>, Vec<NodeId>)> {
        for l in layers {
            if !self.has_layer(l) {
                return Err(DvpError::Config(format!("unknown perceptual layer `{l}`")));
            }
        }
        let mut tape = Tape::new(&self.params);
        let mut h = tape.input(x, input_grad);
        let mut found: Vec<Option<NodeId>> = vec![None; layers.len()];
        let mut conv_iter = self.convs.iter();
        'stages: for (stage, names) in STAGES.iter().enumerate() {
            if stage > 0 {
                if too_small_to_pool(&tape, h) {
                    break;
                }
                h = tape.max_pool(h);
            }
            for _ in names.iter() {
                let Some((name, conv)) = conv_iter.next() else { break 'stages };
                h = tape.conv(h, *conv);
                h = tape.leaky_relu(h, 0.0);
                for (slot, l) in found.iter_mut().zip(layers) {
                    if l == name {
                        *slot = Some(h);
                    }
                }
                if found.iter().all(Option::is_some) {
                    break 'stages;
                }
            }
        }
        let nodes = found
            .into_iter()
            .zip(layers)
            .map(|(n, l)| n.ok_or_else(|| DvpError::ShapeMismatch(format!("image too small to reach layer `{l}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((tape, nodes))
    }
}

fn too_small_to_pool<T: Scalar>(tape: &Tape<'_, T>, h: NodeId) -> bool {
    let v = tape.value(h);
    v.height < 2 || v.width < 2
}

/// Rewrites `W((x - mean) / std) + b` as `W' x + b'`, and sums color filters
/// for grayscale input.
fn fold_normalization<T: Scalar>(weight: &[T], bias: &[T], out_c: usize, input_channels: usize) -> (Vec<T>, Vec<T>) {
    let mut new_w = vec![T::zero(); out_c * input_channels * 9];
    let mut new_b = bias.to_vec();
    for o in 0..out_c {
        for c in 0..3 {
            let inv = 1.0 / IMAGENET_STD[c];
            let target = if input_channels == 1 { 0 } else { c };
            for k in 0..9 {
                let w = weight[(o * 3 + c) * 9 + k].f64();
                new_w[(o * input_channels + target) * 9 + k] += T::of(w * inv);
                new_b[o] -= T::of(w * IMAGENET_MEAN[c] * inv);
            }
        }
    }
    (new_w, new_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_matches_explicit_normalization() {
        let ex = FeatureExtractor::<f64>::random(1, [4, 4, 4], 3).unwrap();
        let x = Tensor::from_vec(3, 8, 8, (0..192).map(|i| (i % 17) as f64 / 17.0).collect());
        let (tape, nodes) = ex.record(x.clone(), &["conv1_1".to_string()], false).unwrap();
        let folded = tape.value(nodes[0]).clone();

        // rebuild the unfolded first layer by hand
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = fan_in_uniform(&mut rng, 4 * 27, 27);
        let mut p = ParamSet::new();
        let wi = p.push("w", vec![4, 3, 3, 3], w);
        let bi = p.push("b", vec![4], vec![0.0; 4]);
        let mut xn = x.clone();
        for c in 0..3 {
            for v in &mut xn.data[c * 64..(c + 1) * 64] {
                // zero padding of the normalized image corresponds to padding
                // with the mean in raw space, so only interior pixels match
                *v = (*v - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
            }
        }
        let mut t = Tape::new(&p);
        let i = t.input(xn, false);
        let o = t.conv(
            i,
            ConvDesc {
                weight: wi,
                bias: bi,
                in_channels: 3,
                out_channels: 4,
                kernel: 3,
            },
        );
        let o = t.leaky_relu(o, 0.0);
        let manual = t.value(o);
        for ch in 0..4 {
            for y in 1..7 {
                for xx in 1..7 {
                    let idx = (ch * 8 + y) * 8 + xx;
                    assert!((manual.data[idx] - folded.data[idx]).abs() < 1e-12);
                }
            }
        }
    }
}
