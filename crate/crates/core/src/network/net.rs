use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::padding::{pad_reflect_tensor, CropRecord};
use super::spec::{Backbone, FinalActivation, NetSpec};
use crate::error::{DvpError, Result};
use crate::nn::{fan_in_uniform, ConvDesc, Gradients, NodeId, ParamSet, Scalar, Tape, Tensor};
use crate::video::Frame;

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

/// Two 3x3 convolutions, optionally with a residual shortcut.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    first: ConvDesc,
    second: ConvDesc,
    residual: bool,
    /// 1x1 projection on the shortcut when channel counts differ.
    projection: Option<ConvDesc>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    encoder: Vec<Block>,
    bottleneck: Block,
    /// Indexed by level; applied from the deepest level upward.
    decoder: Vec<Block>,
    head: ConvDesc,
    skips: bool,
}

/// Encoder-decoder network mapping one frame to one or two output images.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyNet<T: Scalar = f32> {
    spec: NetSpec,
    seed: u64,
    params: ParamSet<T>,
    layout: Layout,
}

fn register_conv<T: Scalar>(
    params: &mut ParamSet<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
) -> ConvDesc {
    let fan_in = in_channels * kernel * kernel;
    let weight = params.push(
        format!("{name}.weight"),
        vec![out_channels, in_channels, kernel, kernel],
        fan_in_uniform(rng, out_channels * fan_in, fan_in),
    );
    let bias = params.push(format!("{name}.bias"), vec![out_channels], vec![T::zero(); out_channels]);
    ConvDesc {
        weight,
        bias,
        in_channels,
        out_channels,
        kernel,
    }
}

fn register_block<T: Scalar>(
    params: &mut ParamSet<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    in_channels: usize,
    out_channels: usize,
    residual: bool,
) -> Block {
    let first = register_conv(params, rng, &format!("{name}.conv1"), in_channels, out_channels, 3);
    let second = register_conv(params, rng, &format!("{name}.conv2"), out_channels, out_channels, 3);
    let projection = (residual && in_channels != out_channels)
        .then(|| register_conv(params, rng, &format!("{name}.proj"), in_channels, out_channels, 1));
    Block {
        first,
        second,
        residual,
        projection,
    }
}

fn build_layout<T: Scalar>(spec: &NetSpec, params: &mut ParamSet<T>, rng: &mut ChaCha8Rng) -> Layout {
    let residual = spec.backbone == Backbone::Resunet;
    let skips = spec.backbone != Backbone::Fcn;
    let mut encoder = Vec::with_capacity(spec.depth);
    let mut in_c = spec.in_channels;
    for level in 0..spec.depth {
        let c = spec.channels_at(level);
        encoder.push(register_block(params, rng, &format!("enc{level}"), in_c, c, residual));
        in_c = c;
    }
    let bottleneck = register_block(params, rng, "bottleneck", in_c, spec.channels_at(spec.depth), residual);
    let mut decoder: Vec<Option<Block>> = vec![None; spec.depth];
    for level in (0..spec.depth).rev() {
        let c = spec.channels_at(level);
        let from_below = spec.channels_at(level + 1);
        let block_in = if skips { from_below + c } else { from_below };
        decoder[level] = Some(register_block(params, rng, &format!("dec{level}"), block_in, c, residual));
    }
    let head = register_conv(params, rng, "head", spec.channels_at(0), spec.output_channels(), 1);
    Layout {
        encoder,
        bottleneck,
        decoder: decoder.into_iter().map(|b| b.expect("every level built")).collect(),
        head,
        skips,
    }
}

impl<T: Scalar> ConsistencyNet<T> {
    /// Builds a network with weights drawn deterministically from `seed`.
    pub fn build(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let layout = build_layout(&spec, &mut params, &mut rng);
        Ok(Self {
            spec,
            seed,
            params,
            layout,
        })
    }

    /// Rebuilds the layout for `spec` and installs the given weights.
    pub(crate) fn from_parts(spec: NetSpec, seed: u64, params: ParamSet<T>) -> Result<Self> {
        let mut net = Self::build(spec, seed)?;
        if net.params.len() != params.len() {
            return Err(DvpError::CheckpointMismatch(format!(
                "expected {} weight arrays, found {}",
                net.params.len(),
                params.len()
            )));
        }
        for i in 0..params.len() {
            if net.params.name(i) != params.name(i) || net.params.shape(i) != params.shape(i) {
                return Err(DvpError::CheckpointMismatch(format!(
                    "array {i}: expected {} {:?}, found {} {:?}",
                    net.params.name(i),
                    net.params.shape(i),
                    params.name(i),
                    params.shape(i)
                )));
            }
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Same architecture and weights in another precision.
    pub fn cast<U: Scalar>(&self) -> ConsistencyNet<U> {
        ConsistencyNet {
            spec: self.spec.clone(),
            seed: self.seed,
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    pub fn check_input(&self, channels: usize, height: usize, width: usize) -> Result<()> {
        if channels != self.spec.in_channels {
            return Err(DvpError::ShapeMismatch(format!(
                "network expects {} input channels, got {channels}",
                self.spec.in_channels
            )));
        }
        let m = self.spec.multiple();
        if height % m != 0 || width % m != 0 {
            return Err(DvpError::ShapeMismatch(format!(
                "{height}x{width} is not divisible by {m}; pad the frame first"
            )));
        }
        Ok(())
    }

    fn block(&self, tape: &mut Tape<'_, T>, x: NodeId, block: &Block) -> NodeId {
        let h = tape.conv(x, block.first);
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        let mut h = tape.conv(h, block.second);
        if block.residual {
            let shortcut = match block.projection {
                Some(p) => tape.conv(x, p),
                None => x,
            };
            h = tape.add(h, shortcut);
        }
        tape.leaky_relu(h, LEAKY_SLOPE)
    }

    /// Records a forward pass; the returned node holds all heads stacked
    /// along channels (head 0 first).
    pub fn record<'p>(&'p self, x: Tensor<T>, input_grad: bool) -> Result<(Tape<'p, T>, NodeId)> {
        self.check_input(x.channels, x.height, x.width)?;
        let mut tape = Tape::new(&self.params);
        let mut h = tape.input(x, input_grad);
        let mut skips = Vec::with_capacity(self.spec.depth);
        for block in &self.layout.encoder {
            h = self.block(&mut tape, h, block);
            skips.push(h);
            h = tape.max_pool(h);
        }
        h = self.block(&mut tape, h, &self.layout.bottleneck);
        for level in (0..self.spec.depth).rev() {
            h = tape.upsample(h);
            if self.layout.skips {
                h = tape.concat(h, skips[level]);
            }
            h = self.block(&mut tape, h, &self.layout.decoder[level]);
        }
        let logits = tape.conv(h, self.layout.head);
        let out = match self.spec.final_activation {
            FinalActivation::Sigmoid => tape.sigmoid(logits),
            FinalActivation::Softmax => tape.softmax(logits, self.spec.out_channels_per_head),
            FinalActivation::None => logits,
        };
        Ok((tape, out))
    }

    /// Forward pass returning the stacked head outputs.
    pub fn forward_tensor(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (tape, out) = self.record(x, false)?;
        Ok(tape.into_value(out))
    }

    /// Splits a stacked output into per-head tensors.
    pub fn split_heads(&self, stacked: &Tensor<T>) -> Vec<Tensor<T>> {
        let c = self.spec.out_channels_per_head;
        (0..self.spec.heads).map(|h| stacked.channel_slice(h * c, c)).collect()
    }

    /// Runs the network on a frame whose dims are multiples of `2^depth`.
    pub fn forward(&self, frame: &Frame) -> Result<Vec<Frame>> {
        let out = self.forward_tensor(Tensor::from_frame(frame))?;
        Ok(self.split_heads(&out).iter().map(Tensor::to_frame).collect())
    }

    /// Runs on any frame size by reflect-padding and cropping back.
    pub fn forward_padded(&self, frame: &Frame) -> Result<Vec<Frame>> {
        let (padded, record) = pad_reflect_tensor(&Tensor::<T>::from_frame(frame), self.spec.multiple());
        let out = self.forward_tensor(padded)?;
        Ok(self
            .split_heads(&out)
            .iter()
            .map(|t| record.crop_tensor(t).to_frame())
            .collect())
    }

    /// Forward pass followed by backward from `output_grad`, accumulating
    /// parameter gradients. Returns the stacked output.
    pub fn forward_backward(
        &self,
        x: Tensor<T>,
        grads: &mut Gradients<T>,
        output_grad: impl FnOnce(&Tensor<T>) -> Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (tape, out) = self.record(x, false)?;
        let g = output_grad(tape.value(out));
        tape.backward(out, g, Some(grads));
        Ok(tape.into_value(out))
    }

    pub fn crop_record(&self, height: usize, width: usize) -> CropRecord {
        CropRecord::for_dims(height, width, self.spec.multiple())
    }
}
