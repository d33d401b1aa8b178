//! Minimal dense tensor engine: NHWC f32 tensors, naive reference kernels
//! (strided/dilated/depthwise convolution, batch-norm inference, resizing,
//! pooling, elementwise ops), a topological graph executor, and deterministic
//! weight initialization.
//!
//! The loop kernels are the reference implementation; everything is evaluated
//! in a fixed order so repeated runs are bitwise identical.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ExecError, TensorError, TensorIoError};
use crate::graphbuilder::{ComputeGraph, Node, Op};

/// Dense rank-4 tensor, batch x height x width x channels, row-major f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: (usize, usize, usize, usize),
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: (usize, usize, usize, usize), data: Vec<f32>) -> Result<Self, TensorError> {
        let (n, h, w, c) = dims;
        if n * h * w * c != data.len() || n == 0 || h == 0 || w == 0 || c == 0 {
            return Err(TensorError::DimMismatch {
                dims,
                len: data.len(),
            });
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: (usize, usize, usize, usize)) -> Self {
        let (n, h, w, c) = dims;
        Tensor {
            dims,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        ((n * self.dims.1 + h) * self.dims.2 + w) * self.dims.3 + c
    }

    #[inline]
    pub fn at(&self, n: usize, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.index(n, h, w, c)]
    }

    pub fn set(&mut self, n: usize, h: usize, w: usize, c: usize, v: f32) {
        let i = self.index(n, h, w, c);
        self.data[i] = v;
    }
}

/// Arbitrary-rank weight tensor (conv kernels are rank 4, bn vectors rank 1).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        WeightTensor { shape, data }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Named weight tensors for one graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    slots: BTreeMap<String, WeightTensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: WeightTensor) {
        self.slots.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.slots.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightTensor> {
        self.slots.remove(name)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &WeightTensor)> {
        self.slots.iter()
    }
}

/// TF-style "same" padding: total pad so output spatial = ceil(in / stride).
fn same_padding(in_size: usize, kernel: usize, stride: usize, dilation: usize) -> (usize, usize) {
    let eff_k = (kernel - 1) * dilation + 1;
    let out = in_size.div_ceil(stride);
    let total = ((out - 1) * stride + eff_k).saturating_sub(in_size);
    (total / 2, out)
}

fn check_conv_args(kernel: usize, stride: usize, dilation: usize) -> Result<(), TensorError> {
    if stride < 1 || dilation < 1 {
        return Err(TensorError::ZeroStride);
    }
    if kernel.is_multiple_of(2) {
        return Err(TensorError::EvenKernel(kernel));
    }
    Ok(())
}

/// Bias-free cross-correlation with same padding. Kernel layout (kh, kw, Cin, Cout).
pub fn conv2d(
    x: &Tensor,
    kernel: &WeightTensor,
    stride: usize,
    dilation: usize,
) -> Result<Tensor, TensorError> {
    let (n, h, w, c) = x.dims();
    let [kh, kw, cin, cout] = kernel.shape[..] else {
        return Err(TensorError::DimMismatch {
            dims: x.dims(),
            len: kernel.shape.len(),
        });
    };
    check_conv_args(kh, stride, dilation)?;
    if cin != c {
        return Err(TensorError::ChannelMismatch {
            input: c,
            kernel: cin,
        });
    }
    let (pad_h, out_h) = same_padding(h, kh, stride, dilation);
    let (pad_w, out_w) = same_padding(w, kw, stride, dilation);
    let mut out = Tensor::zeros((n, out_h, out_w, cout));
    let k = &kernel.data;
    for b in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let out_base = ((b * out_h + oy) * out_w + ox) * cout;
                let acc = &mut out.data[out_base..out_base + cout];
                for ky in 0..kh {
                    let iy = (oy * stride + ky * dilation) as isize - pad_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx * dilation) as isize - pad_w as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let x_base = ((b * h + iy as usize) * w + ix as usize) * cin;
                        let k_base = (ky * kw + kx) * cin * cout;
                        for ic in 0..cin {
                            let xv = x.data[x_base + ic];
                            let k_row = k_base + ic * cout;
                            for oc in 0..cout {
                                acc[oc] += xv * k[k_row + oc];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-channel spatial convolution. Kernel layout (kh, kw, C, 1).
pub fn depthwise_conv2d(
    x: &Tensor,
    kernel: &WeightTensor,
    stride: usize,
    dilation: usize,
) -> Result<Tensor, TensorError> {
    let (n, h, w, c) = x.dims();
    let [kh, kw, kc, one] = kernel.shape[..] else {
        return Err(TensorError::DimMismatch {
            dims: x.dims(),
            len: kernel.shape.len(),
        });
    };
    check_conv_args(kh, stride, dilation)?;
    if kc != c || one != 1 {
        return Err(TensorError::ChannelMismatch {
            input: c,
            kernel: kc,
        });
    }
    let (pad_h, out_h) = same_padding(h, kh, stride, dilation);
    let (pad_w, out_w) = same_padding(w, kw, stride, dilation);
    let mut out = Tensor::zeros((n, out_h, out_w, c));
    let k = &kernel.data;
    for b in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let out_base = ((b * out_h + oy) * out_w + ox) * c;
                let acc = &mut out.data[out_base..out_base + c];
                for ky in 0..kh {
                    let iy = (oy * stride + ky * dilation) as isize - pad_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx * dilation) as isize - pad_w as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let x_base = ((b * h + iy as usize) * w + ix as usize) * c;
                        let k_base = (ky * kw + kx) * c;
                        for ch in 0..c {
                            acc[ch] += x.data[x_base + ch] * k[k_base + ch];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inference-mode batch norm: y = scale * (x - mean) / sqrt(var + eps) + offset.
pub fn batchnorm_inference(
    x: &Tensor,
    scale: &[f32],
    offset: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Result<Tensor, TensorError> {
    let c = x.dims().3;
    for (name, v) in [
        ("scale", scale),
        ("offset", offset),
        ("mean", mean),
        ("var", var),
    ] {
        if v.len() != c {
            return Err(TensorError::ParamLength {
                name,
                got: v.len(),
                expected: c,
            });
        }
    }
    let mut out = x.clone();
    for chunk in out.data.chunks_exact_mut(c) {
        for ch in 0..c {
            chunk[ch] = scale[ch] * (chunk[ch] - mean[ch]) / (var[ch] + eps).sqrt() + offset[ch];
        }
    }
    Ok(out)
}

/// Default batch-norm epsilon used throughout the graphs.
pub const BN_EPSILON: f32 = 1e-3;

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.dims() != b.dims() {
        return Err(TensorError::DimMismatch {
            dims: b.dims(),
            len: a.data.len(),
        });
    }
    let mut out = a.clone();
    for (o, v) in out.data.iter_mut().zip(&b.data) {
        *o += v;
    }
    Ok(out)
}

/// Concatenation along the channel axis.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor, TensorError> {
    let (n, h, w, _) = parts[0].dims();
    let total_c: usize = parts.iter().map(|t| t.dims().3).sum();
    for t in parts {
        let (tn, th, tw, _) = t.dims();
        if (tn, th, tw) != (n, h, w) {
            return Err(TensorError::DimMismatch {
                dims: t.dims(),
                len: t.data.len(),
            });
        }
    }
    let mut out = Tensor::zeros((n, h, w, total_c));
    for b in 0..n {
        for y in 0..h {
            for x_ in 0..w {
                let mut off = 0;
                let out_base = out.index(b, y, x_, 0);
                for t in parts {
                    let c = t.dims().3;
                    let src = t.index(b, y, x_, 0);
                    out.data[out_base + off..out_base + off + c]
                        .copy_from_slice(&t.data[src..src + c]);
                    off += c;
                }
            }
        }
    }
    Ok(out)
}

/// Integer-factor nearest-neighbor upsampling (pixel replication).
pub fn resize_nearest(x: &Tensor, factor: usize) -> Result<Tensor, TensorError> {
    if factor < 1 {
        return Err(TensorError::ZeroFactor);
    }
    let (n, h, w, c) = x.dims();
    let mut out = Tensor::zeros((n, h * factor, w * factor, c));
    for b in 0..n {
        for oy in 0..h * factor {
            for ox in 0..w * factor {
                let src = x.index(b, oy / factor, ox / factor, 0);
                let dst = out.index(b, oy, ox, 0);
                out.data[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
            }
        }
    }
    Ok(out)
}

/// Bilinear resize with half-pixel-center sampling (align-corners = false).
pub fn resize_bilinear(x: &Tensor, target_hw: (usize, usize)) -> Result<Tensor, TensorError> {
    let (n, h, w, c) = x.dims();
    let (th, tw) = target_hw;
    if th == 0 || tw == 0 {
        return Err(TensorError::ZeroFactor);
    }
    let mut out = Tensor::zeros((n, th, tw, c));
    let scale_y = h as f32 / th as f32;
    let scale_x = w as f32 / tw as f32;
    for b in 0..n {
        for oy in 0..th {
            let sy = ((oy as f32 + 0.5) * scale_y - 0.5).max(0.0);
            let y0 = (sy.floor() as usize).min(h - 1);
            let y1 = (y0 + 1).min(h - 1);
            let wy = sy - y0 as f32;
            for ox in 0..tw {
                let sx = ((ox as f32 + 0.5) * scale_x - 0.5).max(0.0);
                let x0 = (sx.floor() as usize).min(w - 1);
                let x1 = (x0 + 1).min(w - 1);
                let wx = sx - x0 as f32;
                let dst = out.index(b, oy, ox, 0);
                for ch in 0..c {
                    let v00 = x.at(b, y0, x0, ch);
                    let v01 = x.at(b, y0, x1, ch);
                    let v10 = x.at(b, y1, x0, ch);
                    let v11 = x.at(b, y1, x1, ch);
                    let top = v00 + (v01 - v00) * wx;
                    let bottom = v10 + (v11 - v10) * wx;
                    out.data[dst + ch] = top + (bottom - top) * wy;
                }
            }
        }
    }
    Ok(out)
}

/// Mean over the spatial extent, per channel; output is 1x1 spatially.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let (n, h, w, c) = x.dims();
    let mut out = Tensor::zeros((n, 1, 1, c));
    let count = (h * w) as f64;
    for b in 0..n {
        for ch in 0..c {
            let mut sum = 0f64;
            for y in 0..h {
                for x_ in 0..w {
                    sum += x.at(b, y, x_, ch) as f64;
                }
            }
            out.set(b, 0, 0, ch, (sum / count) as f32);
        }
    }
    out
}

/// Max pooling with same padding (max over the valid window).
pub fn max_pool(x: &Tensor, kernel: usize, stride: usize) -> Result<Tensor, TensorError> {
    if stride < 1 || kernel < 1 {
        return Err(TensorError::ZeroStride);
    }
    let (n, h, w, c) = x.dims();
    let (pad_h, out_h) = same_padding(h, kernel, stride, 1);
    let (pad_w, out_w) = same_padding(w, kernel, stride, 1);
    let mut out = Tensor::zeros((n, out_h, out_w, c));
    for b in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let dst = out.index(b, oy, ox, 0);
                for ch in 0..c {
                    let mut best = f32::NEG_INFINITY;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad_h as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - pad_w as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            best = best.max(x.at(b, iy as usize, ix as usize, ch));
                        }
                    }
                    out.data[dst + ch] = best;
                }
            }
        }
    }
    Ok(out)
}

fn fetch<'a>(
    weights: &'a WeightStore,
    graph: &ComputeGraph,
    name: &str,
) -> Result<&'a WeightTensor, ExecError> {
    let tensor = weights
        .get(name)
        .ok_or_else(|| ExecError::MissingWeight(name.to_string()))?;
    let expected = &graph.weight_slots[name];
    if &tensor.shape != expected {
        return Err(ExecError::WeightShape {
            name: name.to_string(),
            got: tensor.shape.clone(),
            expected: expected.clone(),
        });
    }
    Ok(tensor)
}

fn exec_node(
    node: &Node,
    inputs: &[&Tensor],
    graph: &ComputeGraph,
    weights: &WeightStore,
) -> Result<Tensor, ExecError> {
    let shape_err = |detail: String| ExecError::Shape {
        node: node.id,
        op: node.op.name().to_string(),
        detail,
    };
    let wrap = |r: Result<Tensor, TensorError>| r.map_err(|e| shape_err(e.to_string()));
    match &node.op {
        Op::Conv2d {
            stride,
            dilation,
            bias,
            ..
        } => {
            let kernel = fetch(weights, graph, &node.weights[0])?;
            let mut out = wrap(conv2d(inputs[0], kernel, *stride, *dilation))?;
            if *bias {
                let b = fetch(weights, graph, &node.weights[1])?;
                let c = out.dims().3;
                if b.data.len() != c {
                    return Err(shape_err(format!(
                        "bias length {} vs {c} channels",
                        b.data.len()
                    )));
                }
                for chunk in out.data_mut().chunks_exact_mut(c) {
                    for (v, bv) in chunk.iter_mut().zip(&b.data) {
                        *v += bv;
                    }
                }
            }
            Ok(out)
        }
        Op::DepthwiseConv2d {
            stride, dilation, ..
        } => {
            let kernel = fetch(weights, graph, &node.weights[0])?;
            wrap(depthwise_conv2d(inputs[0], kernel, *stride, *dilation))
        }
        Op::BatchNorm { .. } => {
            let scale = fetch(weights, graph, &node.weights[0])?;
            let offset = fetch(weights, graph, &node.weights[1])?;
            let mean = fetch(weights, graph, &node.weights[2])?;
            let var = fetch(weights, graph, &node.weights[3])?;
            wrap(batchnorm_inference(
                inputs[0],
                &scale.data,
                &offset.data,
                &mean.data,
                &var.data,
                BN_EPSILON,
            ))
        }
        Op::Activation => Ok(relu(inputs[0])),
        Op::ResizeNearest { factor } => wrap(resize_nearest(inputs[0], *factor)),
        Op::ResizeBilinear { target_stride } => {
            let (h, w) = (graph.input_shape.0, graph.input_shape.1);
            if h % target_stride != 0 || w % target_stride != 0 {
                return Err(shape_err(format!(
                    "input {h}x{w} not divisible by {target_stride}"
                )));
            }
            wrap(resize_bilinear(
                inputs[0],
                (h / target_stride, w / target_stride),
            ))
        }
        Op::GlobalAvgPool => Ok(global_avg_pool(inputs[0])),
        Op::MaxPool { kernel, stride } => wrap(max_pool(inputs[0], *kernel, *stride)),
        Op::Add => wrap(add(inputs[0], inputs[1])),
        Op::Concat => wrap(concat(inputs)),
    }
}

/// Executes the graph in topological order and returns the output tensor.
/// Intermediate tensors are freed as soon as their last consumer has run.
pub fn execute(
    graph: &ComputeGraph,
    input: &Tensor,
    weights: &WeightStore,
) -> Result<Tensor, ExecError> {
    let (n, h, w, c) = input.dims();
    if (h, w, c) != graph.input_shape {
        return Err(ExecError::InputMismatch {
            got: (n, h, w, c),
            expected: graph.input_shape,
        });
    }
    let mut consumers = vec![0usize; graph.nodes.len()];
    for node in &graph.nodes {
        for &i in &node.inputs {
            consumers[i] += 1;
        }
    }
    let mut values: Vec<Option<Tensor>> = vec![None; graph.nodes.len()];
    for node in &graph.nodes {
        let result = {
            let input_refs: Vec<&Tensor> = if node.inputs.is_empty() {
                vec![input]
            } else {
                node.inputs
                    .iter()
                    .map(|&i| values[i].as_ref().expect("inputs precede consumers"))
                    .collect()
            };
            exec_node(node, &input_refs, graph, weights)?
        };
        values[node.id] = Some(result);
        for &i in &node.inputs {
            consumers[i] -= 1;
            if consumers[i] == 0 {
                values[i] = None;
            }
        }
    }
    Ok(values[graph.output_node()]
        .take()
        .expect("output evaluated"))
}

/// Deterministic fan-in-scaled uniform initialization. Conv kernels draw from
/// U(-sqrt(6/fan_in), +sqrt(6/fan_in)); bn slots get identity statistics
/// (scale 1, offset 0, mean 0, var 1); biases start at zero.
pub fn init_random_weights(graph: &ComputeGraph, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for node in &graph.nodes {
        match &node.op {
            Op::Conv2d {
                kernel,
                in_ch,
                bias,
                ..
            } => {
                let shape = graph.weight_slots[&node.weights[0]].clone();
                let fan_in = (kernel * kernel * in_ch) as f32;
                let bound = (6.0 / fan_in).sqrt();
                let data: Vec<f32> = (0..shape.iter().product::<usize>())
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                store.insert(node.weights[0].clone(), WeightTensor::new(shape, data));
                if *bias {
                    let shape = graph.weight_slots[&node.weights[1]].clone();
                    let len = shape.iter().product();
                    store.insert(
                        node.weights[1].clone(),
                        WeightTensor::new(shape, vec![0.0; len]),
                    );
                }
            }
            Op::DepthwiseConv2d { kernel, .. } => {
                let shape = graph.weight_slots[&node.weights[0]].clone();
                let fan_in = (kernel * kernel) as f32;
                let bound = (6.0 / fan_in).sqrt();
                let data: Vec<f32> = (0..shape.iter().product::<usize>())
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                store.insert(node.weights[0].clone(), WeightTensor::new(shape, data));
            }
            Op::BatchNorm { channels } => {
                let c = *channels;
                for (i, value) in [1.0f32, 0.0, 0.0, 1.0].iter().enumerate() {
                    store.insert(
                        node.weights[i].clone(),
                        WeightTensor::new(vec![c], vec![*value; c]),
                    );
                }
            }
            _ => {}
        }
    }
    store
}

const TENSOR_MAGIC: &[u8; 4] = b"TNSR";

fn write_raw_tensor(
    w: &mut impl Write,
    shape: &[usize],
    data: &[f32],
) -> Result<(), TensorIoError> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_raw_tensor(r: &mut impl Read) -> Result<(Vec<usize>, Vec<f32>), TensorIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| TensorIoError::Truncated)?;
    if &magic != TENSOR_MAGIC {
        return Err(TensorIoError::BadMagic);
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| TensorIoError::Truncated)?;
    let rank = u32::from_le_bytes(buf4) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut buf4)
            .map_err(|_| TensorIoError::Truncated)?;
        shape.push(u32::from_le_bytes(buf4) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        r.read_exact(&mut buf4)
            .map_err(|_| TensorIoError::Truncated)?;
        data.push(f32::from_le_bytes(buf4));
    }
    Ok((shape, data))
}

/// Writes an activation tensor in the binary tensor format.
pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<(), TensorIoError> {
    let (n, h, wd, c) = t.dims();
    write_raw_tensor(w, &[n, h, wd, c], t.data())
}

/// Reads a rank-4 activation tensor.
pub fn read_tensor(r: &mut impl Read) -> Result<Tensor, TensorIoError> {
    let (shape, data) = read_raw_tensor(r)?;
    let [n, h, w, c] = shape[..] else {
        return Err(TensorIoError::BadRank(shape.len() as u32));
    };
    Tensor::new((n, h, w, c), data).map_err(|_| TensorIoError::Truncated)
}

/// Writes a weight archive: u32 record count, then (u32 name length, name,
/// embedded tensor) per record in name order.
pub fn write_weights(w: &mut impl Write, store: &WeightStore) -> Result<(), TensorIoError> {
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, tensor) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_raw_tensor(w, &tensor.shape, &tensor.data)?;
    }
    Ok(())
}

pub fn read_weights(r: &mut impl Read) -> Result<WeightStore, TensorIoError> {
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| TensorIoError::Truncated)?;
    let count = u32::from_le_bytes(buf4);
    let mut store = WeightStore::new();
    for _ in 0..count {
        r.read_exact(&mut buf4)
            .map_err(|_| TensorIoError::Truncated)?;
        let name_len = u32::from_le_bytes(buf4) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|_| TensorIoError::Truncated)?;
        let name = String::from_utf8(name).map_err(|_| TensorIoError::BadName)?;
        let (shape, data) = read_raw_tensor(r)?;
        store.insert(name, WeightTensor::new(shape, data));
    }
    Ok(store)
}
