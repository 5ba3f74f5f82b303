//! Reverse-mode differentiation over a recorded sequence of layer ops.
//!
//! A [`Tape`] records every intermediate activation of one forward pass.
//! [`Tape::backward`] then walks the ops in reverse, accumulating parameter
//! gradients and (optionally) the gradient with respect to the input.

use super::params::{Gradients, ParamSet};
use super::scalar::{matmul, Scalar};
use super::tensor::Tensor;

pub type NodeId = usize;

/// Parameter indices and geometry of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDesc {
    pub weight: usize,
    pub bias: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// 1 or 3; 3x3 kernels use zero padding of one pixel.
    pub kernel: usize,
}

#[derive(Debug)]
enum Op {
    Input { requires_grad: bool },
    Conv { x: NodeId, conv: ConvDesc },
    LeakyRelu { x: NodeId, slope: f64 },
    MaxPool { x: NodeId, argmax: Vec<u32> },
    Upsample { x: NodeId },
    Concat { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sigmoid { x: NodeId },
    Softmax { x: NodeId, group: usize },
    Scale { x: NodeId, factor: f64 },
}

/// One recorded forward pass.
pub struct Tape<'p, T: Scalar> {
    params: &'p ParamSet<T>,
    ops: Vec<Op>,
    values: Vec<Tensor<T>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    fn record(&mut self, op: Op, value: Tensor<T>) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id]
    }

    pub fn into_value(mut self, id: NodeId) -> Tensor<T> {
        self.values.swap_remove(id)
    }

    pub fn input(&mut self, x: Tensor<T>, requires_grad: bool) -> NodeId {
        self.record(Op::Input { requires_grad }, x)
    }

    pub fn conv(&mut self, x: NodeId, conv: ConvDesc) -> NodeId {
        let out = conv_forward(&self.values[x], self.params, &conv);
        self.record(Op::Conv { x, conv }, out)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let s = T::of(slope);
        let src = &self.values[x];
        let data = src
            .data
            .iter()
            .map(|&v| if v > T::zero() { v } else { v * s })
            .collect();
        let out = Tensor::from_vec(src.channels, src.height, src.width, data);
        self.record(Op::LeakyRelu { x, slope }, out)
    }

    pub fn max_pool(&mut self, x: NodeId) -> NodeId {
        let (out, argmax) = max_pool_forward(&self.values[x]);
        self.record(Op::MaxPool { x, argmax }, out)
    }

    pub fn upsample(&mut self, x: NodeId) -> NodeId {
        let out = upsample_forward(&self.values[x]);
        self.record(Op::Upsample { x }, out)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = Tensor::concat_channels(&[self.values[a].clone(), self.values[b].clone()]);
        self.record(Op::Concat { a, b }, out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.values[a], &self.values[b]);
        assert!(ta.same_shape(tb), "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x + y).collect();
        let out = Tensor::from_vec(ta.channels, ta.height, ta.width, data);
        self.record(Op::Add { a, b }, out)
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let f = T::of(factor);
        let src = &self.values[x];
        let out = Tensor::from_vec(
            src.channels,
            src.height,
            src.width,
            src.data.iter().map(|&v| v * f).collect(),
        );
        self.record(Op::Scale { x, factor }, out)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let src = &self.values[x];
        let data = src.data.iter().map(|&v| sigmoid(v)).collect();
        let out = Tensor::from_vec(src.channels, src.height, src.width, data);
        self.record(Op::Sigmoid { x }, out)
    }

    /// Softmax across each consecutive block of `group` channels.
    pub fn softmax(&mut self, x: NodeId, group: usize) -> NodeId {
        let src = &self.values[x];
        assert_eq!(src.channels % group, 0, "softmax group must divide channels");
        let n = src.plane_len();
        let mut out = src.clone();
        for g in 0..src.channels / group {
            for i in 0..n {
                let idx = |c: usize| (g * group + c) * n + i;
                let max = (0..group)
                    .map(|c| src.data[idx(c)])
                    .fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for c in 0..group {
                    let e = (src.data[idx(c)] - max).exp();
                    out.data[idx(c)] = e;
                    sum += e;
                }
                for c in 0..group {
                    out.data[idx(c)] /= sum;
                }
            }
        }
        self.record(Op::Softmax { x, group }, out)
    }

    /// Back-propagates `grad` from `output`.
    ///
    /// Parameter gradients are accumulated into `param_grads` when given.
    /// Returns the gradient with respect to the first input node if it was
    /// created with `requires_grad`.
    pub fn backward(
        &self,
        output: NodeId,
        grad: Tensor<T>,
        param_grads: Option<&mut Gradients<T>>,
    ) -> Option<Tensor<T>> {
        self.backward_from(vec![(output, grad)], param_grads)
    }

    /// Like [`Tape::backward`] with gradients injected at several nodes.
    pub fn backward_from(
        &self,
        seeds: Vec<(NodeId, Tensor<T>)>,
        mut param_grads: Option<&mut Gradients<T>>,
    ) -> Option<Tensor<T>> {
        let needs = self.needs_grad();
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.values.len()).map(|_| None).collect();
        let mut last = 0;
        for (node, grad) in seeds {
            assert!(grad.same_shape(&self.values[node]), "seed gradient shape");
            accumulate(&mut grads[node], grad);
            last = last.max(node);
        }
        for id in (0..=last).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.ops[id] {
                Op::Input { requires_grad } => {
                    if *requires_grad {
                        grads[id] = Some(g);
                    }
                }
                Op::Conv { x, conv } => {
                    let dx = conv_backward(
                        &self.values[*x],
                        &g,
                        self.params,
                        conv,
                        param_grads.as_deref_mut(),
                        needs[*x],
                    );
                    if let Some(dx) = dx {
                        accumulate(&mut grads[*x], dx);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    if needs[*x] {
                        let s = T::of(*slope);
                        let y = &self.values[id];
                        let data = g
                            .data
                            .iter()
                            .zip(&y.data)
                            .map(|(&gv, &yv)| if yv > T::zero() { gv } else { gv * s })
                            .collect();
                        accumulate(&mut grads[*x], Tensor::from_vec(g.channels, g.height, g.width, data));
                    }
                }
                Op::MaxPool { x, argmax } => {
                    if needs[*x] {
                        let src = &self.values[*x];
                        let mut dx = Tensor::zeros(src.channels, src.height, src.width);
                        for (o, &a) in argmax.iter().enumerate() {
                            dx.data[a as usize] += g.data[o];
                        }
                        accumulate(&mut grads[*x], dx);
                    }
                }
                Op::Upsample { x } => {
                    if needs[*x] {
                        let src = &self.values[*x];
                        accumulate(&mut grads[*x], upsample_backward(&g, src.height, src.width));
                    }
                }
                Op::Concat { a, b } => {
                    let ca = self.values[*a].channels;
                    let cb = self.values[*b].channels;
                    if needs[*a] {
                        accumulate(&mut grads[*a], g.channel_slice(0, ca));
                    }
                    if needs[*b] {
                        accumulate(&mut grads[*b], g.channel_slice(ca, cb));
                    }
                }
                Op::Add { a, b } => {
                    if needs[*b] {
                        accumulate(&mut grads[*b], g.clone());
                    }
                    if needs[*a] {
                        accumulate(&mut grads[*a], g);
                    }
                }
                Op::Scale { x, factor } => {
                    if needs[*x] {
                        let f = T::of(*factor);
                        let data = g.data.iter().map(|&v| v * f).collect();
                        accumulate(&mut grads[*x], Tensor::from_vec(g.channels, g.height, g.width, data));
                    }
                }
                Op::Sigmoid { x } => {
                    if needs[*x] {
                        let y = &self.values[id];
                        let data = g
                            .data
                            .iter()
                            .zip(&y.data)
                            .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                            .collect();
                        accumulate(&mut grads[*x], Tensor::from_vec(g.channels, g.height, g.width, data));
                    }
                }
                Op::Softmax { x, group } => {
                    if needs[*x] {
                        let y = &self.values[id];
                        let n = y.plane_len();
                        let mut dx = g.clone();
                        for gi in 0..y.channels / group {
                            for i in 0..n {
                                let idx = |c: usize| (gi * group + c) * n + i;
                                let dot = (0..*group)
                                    .map(|c| y.data[idx(c)] * g.data[idx(c)])
                                    .fold(T::zero(), |a, b| a + b);
                                for c in 0..*group {
                                    dx.data[idx(c)] = y.data[idx(c)] * (g.data[idx(c)] - dot);
                                }
                            }
                        }
                        accumulate(&mut grads[*x], dx);
                    }
                }
            }
        }
        grads.into_iter().next().flatten()
    }

    /// Whether a gradient must flow into each node: it is a trainable input,
    /// or something upstream of it carries parameters.
    fn needs_grad(&self) -> Vec<bool> {
        let mut needs = vec![false; self.ops.len()];
        for id in 0..self.ops.len() {
            needs[id] = match &self.ops[id] {
                Op::Input { requires_grad } => *requires_grad,
                Op::Conv { .. } => true,
                Op::LeakyRelu { x, .. }
                | Op::MaxPool { x, .. }
                | Op::Upsample { x }
                | Op::Sigmoid { x }
                | Op::Softmax { x, .. }
                | Op::Scale { x, .. } => needs[*x],
                Op::Concat { a, b } | Op::Add { a, b } => needs[*a] || needs[*b],
            };
        }
        needs
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => acc.data.iter_mut().zip(&g.data).for_each(|(a, &b)| *a += b),
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Unfolds 3x3 neighborhoods: row `c*9 + ky*3 + kx`, column `y*W + x`.
fn im2col<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let (c, h, w) = (x.channels, x.height, x.width);
    let n = h * w;
    let mut col = vec![T::zero(); c * 9 * n];
    for ch in 0..c {
        let plane = &x.data[ch * n..(ch + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ch * 9 + ky * 3 + kx) * n..][..n];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize) -> Tensor<T> {
    let n = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let plane = &mut out.data[ch * n..(ch + 1) * n];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ch * 9 + ky * 3 + kx) * n..][..n];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, &s)| *d += s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, &s)| *d += s),
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_forward<T: Scalar>(x: &Tensor<T>, params: &ParamSet<T>, conv: &ConvDesc) -> Tensor<T> {
    assert_eq!(x.channels, conv.in_channels, "conv input channels");
    let n = x.plane_len();
    let k = conv.in_channels * conv.kernel * conv.kernel;
    let weight = params.get(conv.weight);
    let bias = params.get(conv.bias);
    let mut out = Tensor::zeros(conv.out_channels, x.height, x.width);
    for (o, row) in out.data.chunks_mut(n).enumerate() {
        row.iter_mut().for_each(|v| *v = bias[o]);
    }
    if conv.kernel == 1 {
        matmul(conv.out_channels, k, n, weight, false, &x.data, false, &mut out.data, true);
    } else {
        let col = im2col(x);
        matmul(conv.out_channels, k, n, weight, false, &col, false, &mut out.data, true);
    }
    out
}

fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    g: &Tensor<T>,
    params: &ParamSet<T>,
    conv: &ConvDesc,
    param_grads: Option<&mut Gradients<T>>,
    need_dx: bool,
) -> Option<Tensor<T>> {
    let n = x.plane_len();
    let k = conv.in_channels * conv.kernel * conv.kernel;
    let col_storage;
    let col: &[T] = if conv.kernel == 1 {
        &x.data
    } else {
        col_storage = im2col(x);
        &col_storage
    };
    if let Some(pg) = param_grads {
        matmul(conv.out_channels, n, k, &g.data, false, col, true, &mut pg.0[conv.weight], true);
        let db = &mut pg.0[conv.bias];
        for (o, row) in g.data.chunks(n).enumerate() {
            db[o] += row.iter().fold(T::zero(), |a, &b| a + b);
        }
    }
    if !need_dx {
        return None;
    }
    let weight = params.get(conv.weight);
    let mut dcol = vec![T::zero(); k * n];
    matmul(k, conv.out_channels, n, weight, true, &g.data, false, &mut dcol, false);
    Some(if conv.kernel == 1 {
        Tensor::from_vec(x.channels, x.height, x.width, dcol)
    } else {
        col2im(&dcol, x.channels, x.height, x.width)
    })
}

fn max_pool_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    // odd trailing rows/columns are dropped
    let (h, w) = (x.height / 2, x.width / 2);
    let mut out = Tensor::zeros(x.channels, h, w);
    let mut argmax = Vec::with_capacity(out.data.len());
    for c in 0..x.channels {
        let base = c * x.height * x.width;
        for y in 0..h {
            for xx in 0..w {
                let mut best = base + 2 * y * x.width + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * x.width + 2 * xx + dx;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                out.data[(c * h + y) * w + xx] = x.data[best];
                argmax.push(best as u32);
            }
        }
    }
    (out, argmax)
}

/// Taps for 2x bilinear upsampling with half-pixel centers along one axis.
fn upsample_taps(len: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * len)
        .map(|i| {
            let pos = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = pos.floor() as usize;
            (i0, (i0 + 1).min(len - 1), pos - i0 as f64)
        })
        .collect()
}

fn upsample_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.height, x.width);
    let rows = upsample_taps(h);
    let cols = upsample_taps(w);
    let mut out = Tensor::zeros(x.channels, 2 * h, 2 * w);
    let mut tmp = vec![T::zero(); h * 2 * w];
    for c in 0..x.channels {
        let plane = &x.data[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            for (ox, &(x0, x1, f)) in cols.iter().enumerate() {
                let f = T::of(f);
                tmp[y * 2 * w + ox] = plane[y * w + x0] * (T::one() - f) + plane[y * w + x1] * f;
            }
        }
        let dst = &mut out.data[c * 4 * h * w..(c + 1) * 4 * h * w];
        for (oy, &(y0, y1, f)) in rows.iter().enumerate() {
            let f = T::of(f);
            for ox in 0..2 * w {
                dst[oy * 2 * w + ox] = tmp[y0 * 2 * w + ox] * (T::one() - f) + tmp[y1 * 2 * w + ox] * f;
            }
        }
    }
    out
}

fn upsample_backward<T: Scalar>(g: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let rows = upsample_taps(h);
    let cols = upsample_taps(w);
    let mut out = Tensor::zeros(g.channels, h, w);
    let mut tmp = vec![T::zero(); h * 2 * w];
    for c in 0..g.channels {
        let src = &g.data[c * 4 * h * w..(c + 1) * 4 * h * w];
        tmp.iter_mut().for_each(|v| *v = T::zero());
        for (oy, &(y0, y1, f)) in rows.iter().enumerate() {
            let f = T::of(f);
            for ox in 0..2 * w {
                let v = src[oy * 2 * w + ox];
                tmp[y0 * 2 * w + ox] += v * (T::one() - f);
                tmp[y1 * 2 * w + ox] += v * f;
            }
        }
        let plane = &mut out.data[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            for (ox, &(x0, x1, f)) in cols.iter().enumerate() {
                let f = T::of(f);
                let v = tmp[y * 2 * w + ox];
                plane[y * w + x0] += v * (T::one() - f);
                plane[y * w + x1] += v * f;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Direct 3x3 convolution with zero padding.
    fn naive_conv(x: &Tensor<f64>, wt: &[f64], b: &[f64], out_c: usize) -> Tensor<f64> {
        let (c, h, w) = (x.channels, x.height, x.width);
        let mut out = Tensor::zeros(out_c, h, w);
        for o in 0..out_c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b[o];
                    for i in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                                    acc += wt[((o * c + i) * 3 + ky) * 3 + kx]
                                        * x.data[(i * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    out.data[(o * h + y) * w + xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&mut rng, 3, 5, 7);
        let mut params = ParamSet::new();
        let wt: Vec<f64> = (0..4 * 27).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wi = params.push("w", vec![4, 3, 3, 3], wt.clone());
        let bi = params.push("b", vec![4], b.clone());
        let desc = ConvDesc {
            weight: wi,
            bias: bi,
            in_channels: 3,
            out_channels: 4,
            kernel: 3,
        };
        let got = conv_forward(&x, &params, &desc);
        let want = naive_conv(&x, &wt, &b, 4);
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Checks every op's input gradient against central differences of a
    /// random linear functional of the output.
    #[test]
    fn op_input_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        let wi = params.push("w", vec![2, 2, 3, 3], (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let bi = params.push("b", vec![2], vec![0.1, -0.2]);
        let desc = ConvDesc {
            weight: wi,
            bias: bi,
            in_channels: 2,
            out_channels: 2,
            kernel: 3,
        };
        let x = random_tensor(&mut rng, 2, 4, 6);
        type Build = fn(&mut Tape<'_, f64>, NodeId, ConvDesc) -> NodeId;
        let builders: Vec<(&str, Build)> = vec![
            ("conv", |t, x, d| t.conv(x, d)),
            ("lrelu", |t, x, _| t.leaky_relu(x, 0.2)),
            ("pool", |t, x, _| t.max_pool(x)),
            ("upsample", |t, x, _| t.upsample(x)),
            ("concat", |t, x, d| {
                let y = t.conv(x, d);
                t.concat(x, y)
            }),
            ("add", |t, x, d| {
                let y = t.conv(x, d);
                t.add(x, y)
            }),
            ("sigmoid", |t, x, _| t.sigmoid(x)),
            ("softmax", |t, x, _| t.softmax(x, 2)),
            ("scale", |t, x, _| t.scale(x, -1.5)),
        ];
        for (name, build) in builders {
            let mut tape = Tape::new(&params);
            let inp = tape.input(x.clone(), true);
            let out = build(&mut tape, inp, desc);
            let shape = tape.value(out).clone();
            let probe: Vec<f64> = (0..shape.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = Tensor::from_vec(shape.channels, shape.height, shape.width, probe.clone());
            let dx = tape.backward(out, g, None).expect("input grad");
            let eval = |xv: &Tensor<f64>| {
                let mut t = Tape::new(&params);
                let i = t.input(xv.clone(), false);
                let o = build(&mut t, i, desc);
                t.value(o).data.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
            };
            for i in 0..x.data.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.data[i] += 1e-6;
                xm.data[i] -= 1e-6;
                let fd = (eval(&xp) - eval(&xm)) / 2e-6;
                assert!(
                    (fd - dx.data[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{name}: index {i}: fd {fd} vs analytic {}",
                    dx.data[i]
                );
            }
        }
    }

    #[test]
    fn upsample_preserves_constants() {
        let x = Tensor::from_vec(1, 3, 2, vec![0.25f64; 6]);
        let up = upsample_forward(&x);
        assert_eq!((up.height, up.width), (6, 4));
        assert!(up.data.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
