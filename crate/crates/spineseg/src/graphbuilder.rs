//! Lowers a [`ModelSpec`] into a [`ComputeGraph`] of primitive tensor ops:
//! stem, permuted blocks with cross-scale resampling and fusion, ASPP, head,
//! classifier, and the final bilinear upsample back to input resolution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::archspec::{BlockFamily, BlockKind, ModelSpec};
use crate::error::BuildError;

/// Primitive tensor operation. Convolutions use "same" padding; a dilated 3x3
/// pads by its dilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Conv2d {
        kernel: usize,
        stride: usize,
        dilation: usize,
        in_ch: usize,
        out_ch: usize,
        bias: bool,
    },
    DepthwiseConv2d {
        kernel: usize,
        stride: usize,
        dilation: usize,
        channels: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Activation,
    ResizeNearest {
        factor: usize,
    },
    /// Bilinear resize to (input_h / target_stride, input_w / target_stride).
    /// Targets are input-relative so graph structure is independent of size.
    ResizeBilinear {
        target_stride: usize,
    },
    GlobalAvgPool,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Add,
    Concat,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Conv2d { .. } => "conv2d",
            Op::DepthwiseConv2d { .. } => "depthwise_conv2d",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Activation => "activation",
            Op::ResizeNearest { .. } => "resize_nearest",
            Op::ResizeBilinear { .. } => "resize_bilinear",
            Op::GlobalAvgPool => "global_avg_pool",
            Op::MaxPool { .. } => "max_pool",
            Op::Add => "add",
            Op::Concat => "concat",
        }
    }

    /// Short attribute string for DOT labels and reports.
    pub fn attrs(&self) -> String {
        match self {
            Op::Conv2d {
                kernel,
                stride,
                dilation,
                in_ch,
                out_ch,
                bias,
            } => {
                let mut s = format!("{k}x{k} s{stride} d{dilation} {in_ch}>{out_ch}", k = kernel);
                if *bias {
                    s.push_str(" +bias");
                }
                s
            }
            Op::DepthwiseConv2d {
                kernel,
                stride,
                dilation,
                channels,
            } => {
                format!("{k}x{k} s{stride} d{dilation} c{channels}", k = kernel)
            }
            Op::BatchNorm { channels } => format!("c{channels}"),
            Op::Activation => String::new(),
            Op::ResizeNearest { factor } => format!("x{factor}"),
            Op::ResizeBilinear { target_stride } => format!("to input/{target_stride}"),
            Op::GlobalAvgPool => String::new(),
            Op::MaxPool { kernel, stride } => format!("{k}x{k} s{stride}", k = kernel),
            Op::Add | Op::Concat => String::new(),
        }
    }
}

/// Which part of the network a node belongs to; used for cost itemization and
/// DOT coloring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Stem,
    Block(usize),
    Aspp,
    Head,
    Classifier,
    Output,
}

impl Segment {
    pub fn label(&self) -> String {
        match self {
            Segment::Stem => "stem".into(),
            Segment::Block(i) => format!("block{i}"),
            Segment::Aspp => "aspp".into(),
            Segment::Head => "head".into(),
            Segment::Classifier => "classifier".into(),
            Segment::Output => "output".into(),
        }
    }

    /// Coarse grouping used by the stats report.
    pub fn group(&self) -> &'static str {
        match self {
            Segment::Stem | Segment::Block(_) => "backbone",
            Segment::Aspp => "aspp",
            Segment::Head | Segment::Classifier | Segment::Output => "head",
        }
    }
}

/// One node of the lowered graph. Inputs always point to earlier nodes; an
/// empty input list means the graph input tensor.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: usize,
    pub op: Op,
    pub inputs: Vec<usize>,
    /// Weight slots consumed by this node. Batch norm consumes
    /// [scale, offset, mean, var] in that order.
    pub weights: Vec<String>,
    pub segment: Segment,
    /// Block resolution level, when the node belongs to a block.
    pub level: Option<u32>,
}

/// A lowered, immutable compute graph.
#[derive(Debug, Clone)]
pub struct ComputeGraph {
    pub nodes: Vec<Node>,
    /// Weight slot name -> tensor shape.
    pub weight_slots: BTreeMap<String, Vec<usize>>,
    /// (H, W, C) of the expected input tensor.
    pub input_shape: (usize, usize, usize),
    /// Channel count of the graph output (number of classes).
    pub num_outputs: usize,
}

impl ComputeGraph {
    pub fn output_node(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn classifier_node(&self) -> Option<usize> {
        self.nodes
            .iter()
            .rfind(|n| n.segment == Segment::Classifier)
            .map(|n| n.id)
    }

    /// Per-node output shapes (h, w, c) for an input of the given size.
    /// Fails when some spatial size does not divide evenly.
    pub fn infer_shapes(
        &self,
        input_hw: (usize, usize),
    ) -> Result<Vec<(usize, usize, usize)>, BuildError> {
        let (in_h, in_w) = input_hw;
        let mut shapes: Vec<(usize, usize, usize)> = Vec::with_capacity(self.nodes.len());
        let input = (in_h, in_w, self.input_shape.2);
        let err = |node: &Node, detail: String| {
            Err(BuildError::Invariant(format!(
                "node {} ({}): {}",
                node.id,
                node.op.name(),
                detail
            )))
        };
        for node in &self.nodes {
            let get = |i: usize| {
                if node.inputs.is_empty() {
                    input
                } else {
                    shapes[node.inputs[i]]
                }
            };
            let shape = match &node.op {
                Op::Conv2d {
                    stride,
                    in_ch,
                    out_ch,
                    ..
                } => {
                    let (h, w, c) = get(0);
                    if c != *in_ch {
                        return err(
                            node,
                            format!("input has {c} channels, conv expects {in_ch}"),
                        );
                    }
                    (h.div_ceil(*stride), w.div_ceil(*stride), *out_ch)
                }
                Op::DepthwiseConv2d {
                    stride, channels, ..
                } => {
                    let (h, w, c) = get(0);
                    if c != *channels {
                        return err(node, format!("input has {c} channels, expected {channels}"));
                    }
                    (h.div_ceil(*stride), w.div_ceil(*stride), c)
                }
                Op::BatchNorm { channels } => {
                    let (h, w, c) = get(0);
                    if c != *channels {
                        return err(
                            node,
                            format!("input has {c} channels, bn expects {channels}"),
                        );
                    }
                    (h, w, c)
                }
                Op::Activation => get(0),
                Op::ResizeNearest { factor } => {
                    let (h, w, c) = get(0);
                    (h * factor, w * factor, c)
                }
                Op::ResizeBilinear { target_stride } => {
                    let (_, _, c) = get(0);
                    if in_h % target_stride != 0 || in_w % target_stride != 0 {
                        return Err(BuildError::IndivisibleInput {
                            h: in_h,
                            w: in_w,
                            level: target_stride.trailing_zeros(),
                        });
                    }
                    (in_h / target_stride, in_w / target_stride, c)
                }
                Op::GlobalAvgPool => {
                    let (_, _, c) = get(0);
                    (1, 1, c)
                }
                Op::MaxPool { stride, .. } => {
                    let (h, w, c) = get(0);
                    (h.div_ceil(*stride), w.div_ceil(*stride), c)
                }
                Op::Add => {
                    let a = get(0);
                    let b = get(1);
                    if a != b {
                        return err(node, format!("add operands {a:?} vs {b:?}"));
                    }
                    a
                }
                Op::Concat => {
                    let first = get(0);
                    let mut c = 0;
                    for (i, _) in node.inputs.iter().enumerate() {
                        let s = get(i);
                        if (s.0, s.1) != (first.0, first.1) {
                            return err(
                                node,
                                format!("concat spatial mismatch {s:?} vs {first:?}"),
                            );
                        }
                        c += s.2;
                    }
                    (first.0, first.1, c)
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Structural invariants: forward-only edges, valid attrs, one output,
    /// every weight slot consumed exactly once.
    pub fn validate(&self) -> Result<(), BuildError> {
        let inv = |msg: String| Err(BuildError::Invariant(msg));
        let mut consumed: BTreeMap<&str, usize> = BTreeMap::new();
        let mut has_consumer = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return inv(format!("node {i} carries id {}", node.id));
            }
            for &input in &node.inputs {
                if input >= i {
                    return inv(format!("node {i} has forward reference to {input}"));
                }
                has_consumer[input] = true;
            }
            for name in &node.weights {
                *consumed.entry(name.as_str()).or_default() += 1;
                if !self.weight_slots.contains_key(name) {
                    return inv(format!("node {i} consumes undeclared slot '{name}'"));
                }
            }
            match &node.op {
                Op::Conv2d {
                    kernel,
                    stride,
                    dilation,
                    ..
                }
                | Op::DepthwiseConv2d {
                    kernel,
                    stride,
                    dilation,
                    ..
                } => {
                    if *stride < 1 || *dilation < 1 {
                        return inv(format!("node {i}: stride/dilation must be >= 1"));
                    }
                    if kernel % 2 == 0 {
                        return inv(format!("node {i}: kernel {kernel} must be odd"));
                    }
                }
                Op::ResizeNearest { factor } if *factor < 1 => {
                    return inv(format!("node {i}: zero resize factor"));
                }
                _ => {}
            }
        }
        for name in self.weight_slots.keys() {
            match consumed.get(name.as_str()) {
                Some(1) => {}
                Some(n) => return inv(format!("slot '{name}' consumed {n} times")),
                None => return inv(format!("slot '{name}' is never consumed")),
            }
        }
        let sinks: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| !has_consumer[i])
            .collect();
        if sinks != [self.nodes.len() - 1] {
            return inv(format!(
                "expected exactly one output node, found sinks {sinks:?}"
            ));
        }
        Ok(())
    }
}

/// Handle to a produced feature map during lowering.
#[derive(Debug, Clone, Copy)]
pub struct Feature {
    pub node: usize,
    pub level: u32,
    pub channels: usize,
    /// Feature dimension of the producing block; resampling squeezes
    /// relative to this, not to the tensor width.
    pub feature_dim: usize,
}

/// Pseudo-id marking the graph input tensor when passed as a node input.
pub const GRAPH_INPUT: usize = usize::MAX;

/// Incremental graph builder. The `make_*` methods mirror the lowering rules
/// and are exposed so block/resample/ASPP subgraphs can be built and tested
/// in isolation.
pub struct GraphBuilder {
    nodes: Vec<Node>,
    slots: BTreeMap<String, Vec<usize>>,
    input_shape: (usize, usize, usize),
    segment: Segment,
    level: Option<u32>,
}

impl GraphBuilder {
    pub fn new(input_shape: (usize, usize, usize)) -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            slots: BTreeMap::new(),
            input_shape,
            segment: Segment::Stem,
            level: None,
        }
    }

    pub fn set_segment(&mut self, segment: Segment, level: Option<u32>) {
        self.segment = segment;
        self.level = level;
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, weights: Vec<String>) -> usize {
        let inputs: Vec<usize> = inputs.into_iter().filter(|&i| i != GRAPH_INPUT).collect();
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            op,
            inputs,
            weights,
            segment: self.segment,
            level: self.level,
        });
        id
    }

    fn slot(&mut self, name: String, shape: Vec<usize>) -> String {
        debug_assert!(!self.slots.contains_key(&name), "duplicate slot {name}");
        self.slots.insert(name.clone(), shape);
        name
    }

    /// Conv + declared kernel slot (`{name}.kernel`, plus `{name}.bias`).
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        name: &str,
        input: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        in_ch: usize,
        out_ch: usize,
        bias: bool,
    ) -> usize {
        let mut weights = vec![self.slot(
            format!("{name}.kernel"),
            vec![kernel, kernel, in_ch, out_ch],
        )];
        if bias {
            weights.push(self.slot(format!("{name}.bias"), vec![out_ch]));
        }
        self.push(
            Op::Conv2d {
                kernel,
                stride,
                dilation,
                in_ch,
                out_ch,
                bias,
            },
            vec![input],
            weights,
        )
    }

    pub fn depthwise(
        &mut self,
        name: &str,
        input: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        channels: usize,
    ) -> usize {
        let weights = vec![self.slot(format!("{name}.kernel"), vec![kernel, kernel, channels, 1])];
        self.push(
            Op::DepthwiseConv2d {
                kernel,
                stride,
                dilation,
                channels,
            },
            vec![input],
            weights,
        )
    }

    pub fn batchnorm(&mut self, name: &str, input: usize, channels: usize) -> usize {
        let weights = ["scale", "offset", "mean", "var"]
            .iter()
            .map(|p| self.slot(format!("{name}.{p}"), vec![channels]))
            .collect();
        self.push(Op::BatchNorm { channels }, vec![input], weights)
    }

    pub fn relu(&mut self, input: usize) -> usize {
        self.push(Op::Activation, vec![input], vec![])
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        self.push(Op::Add, vec![a, b], vec![])
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_bn(
        &mut self,
        name: &str,
        input: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        in_ch: usize,
        out_ch: usize,
    ) -> usize {
        let c = self.conv(name, input, kernel, stride, dilation, in_ch, out_ch, false);
        self.batchnorm(&format!("{name}.bn"), c, out_ch)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_bn_act(
        &mut self,
        name: &str,
        input: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        in_ch: usize,
        out_ch: usize,
    ) -> usize {
        let b = self.conv_bn(name, input, kernel, stride, dilation, in_ch, out_ch);
        self.relu(b)
    }

    /// 3x3 conv + bn + act, lowered as a depthwise/pointwise pair when
    /// `separable` (1x1 convs are never separated).
    fn spatial_conv_bn_act(
        &mut self,
        name: &str,
        input: usize,
        dilation: usize,
        in_ch: usize,
        out_ch: usize,
        separable: bool,
    ) -> usize {
        if separable {
            let dw = self.depthwise(&format!("{name}.dw"), input, 3, 1, dilation, in_ch);
            let bn = self.batchnorm(&format!("{name}.dw.bn"), dw, in_ch);
            let act = self.relu(bn);
            self.conv_bn_act(&format!("{name}.pw"), act, 1, 1, 1, in_ch, out_ch)
        } else {
            self.conv_bn_act(name, input, 3, 1, dilation, in_ch, out_ch)
        }
    }

    /// Adapts a source feature to a target level and width: 1x1 squeeze to
    /// ceil(alpha * source feature dim) + bn, spatial resize (nearest upsample,
    /// or stride-2 3x3 conv followed by stride-2 max-pools), 1x1 restore + bn.
    pub fn make_resample(
        &mut self,
        prefix: &str,
        src: Feature,
        to_level: u32,
        to_ch: usize,
    ) -> Feature {
        let squeeze_ch = src.feature_dim.div_ceil(2);
        let mut node = self.conv_bn(
            &format!("{prefix}.squeeze"),
            src.node,
            1,
            1,
            1,
            src.channels,
            squeeze_ch,
        );
        if src.level > to_level {
            let factor = 1usize << (src.level - to_level);
            node = self.push(Op::ResizeNearest { factor }, vec![node], vec![]);
        } else if src.level < to_level {
            node = self.conv_bn(
                &format!("{prefix}.down"),
                node,
                3,
                2,
                1,
                squeeze_ch,
                squeeze_ch,
            );
            for _ in src.level + 1..to_level {
                node = self.push(
                    Op::MaxPool {
                        kernel: 3,
                        stride: 2,
                    },
                    vec![node],
                    vec![],
                );
            }
        }
        let node = self.conv_bn(
            &format!("{prefix}.restore"),
            node,
            1,
            1,
            1,
            squeeze_ch,
            to_ch,
        );
        Feature {
            node,
            level: to_level,
            channels: to_ch,
            feature_dim: src.feature_dim,
        }
    }

    /// Residual bottleneck or inverted bottleneck over an already-fused input.
    /// `feature_dim` is the effective (width-scaled) inner dimension; dilation
    /// applies to the 3x3 convolution only.
    pub fn make_block(
        &mut self,
        prefix: &str,
        input: Feature,
        family: BlockFamily,
        feature_dim: usize,
        dilation: usize,
    ) -> Feature {
        let f = feature_dim;
        let in_ch = input.channels;
        match family {
            BlockFamily::Bottleneck => {
                let out_ch = 4 * f;
                let x = self.conv_bn_act(&format!("{prefix}.conv1"), input.node, 1, 1, 1, in_ch, f);
                let x = self.conv_bn_act(&format!("{prefix}.conv2"), x, 3, 1, dilation, f, f);
                let x = self.conv_bn(&format!("{prefix}.conv3"), x, 1, 1, 1, f, out_ch);
                let shortcut = if in_ch == out_ch {
                    input.node
                } else {
                    self.conv_bn(
                        &format!("{prefix}.proj"),
                        input.node,
                        1,
                        1,
                        1,
                        in_ch,
                        out_ch,
                    )
                };
                let sum = self.add(x, shortcut);
                let node = self.relu(sum);
                Feature {
                    node,
                    level: input.level,
                    channels: out_ch,
                    feature_dim: f,
                }
            }
            BlockFamily::InvertedBottleneck => {
                let expand_ch = 6 * f;
                let x = self.conv_bn_act(
                    &format!("{prefix}.expand"),
                    input.node,
                    1,
                    1,
                    1,
                    in_ch,
                    expand_ch,
                );
                let dw = self.depthwise(&format!("{prefix}.dw"), x, 3, 1, dilation, expand_ch);
                let bn = self.batchnorm(&format!("{prefix}.dw.bn"), dw, expand_ch);
                let x = self.relu(bn);
                let x = self.conv_bn(&format!("{prefix}.project"), x, 1, 1, 1, expand_ch, f);
                let node = if in_ch == f {
                    self.add(x, input.node)
                } else {
                    x
                };
                Feature {
                    node,
                    level: input.level,
                    channels: f,
                    feature_dim: f,
                }
            }
        }
    }

    /// Atrous spatial pyramid pooling: a 1x1 branch, one 3x3 branch per rate
    /// (dilation = rate), and a global-pool branch, concatenated and projected
    /// to `out_ch`. All convs carry bn + activation.
    pub fn make_aspp(
        &mut self,
        prefix: &str,
        src: Feature,
        rates: &[u32],
        out_ch: usize,
        separable: bool,
    ) -> Result<Feature, BuildError> {
        if rates.is_empty() {
            return Err(BuildError::InvalidSpec(
                "aspp rates must be non-empty".into(),
            ));
        }
        let in_ch = src.channels;
        let mut branches = Vec::new();
        branches.push(self.conv_bn_act(&format!("{prefix}.b0"), src.node, 1, 1, 1, in_ch, out_ch));
        for (i, &rate) in rates.iter().enumerate() {
            branches.push(self.spatial_conv_bn_act(
                &format!("{prefix}.b{}", i + 1),
                src.node,
                rate as usize,
                in_ch,
                out_ch,
                separable,
            ));
        }
        let pooled = self.push(Op::GlobalAvgPool, vec![src.node], vec![]);
        let pooled = self.conv_bn_act(&format!("{prefix}.pool"), pooled, 1, 1, 1, in_ch, out_ch);
        let target_stride = 1usize << src.level;
        let pooled = self.push(Op::ResizeBilinear { target_stride }, vec![pooled], vec![]);
        branches.push(pooled);
        let concat = self.push(Op::Concat, branches, vec![]);
        let concat_ch = (rates.len() + 2) * out_ch;
        let node = self.conv_bn_act(
            &format!("{prefix}.project"),
            concat,
            1,
            1,
            1,
            concat_ch,
            out_ch,
        );
        Ok(Feature {
            node,
            level: src.level,
            channels: out_ch,
            feature_dim: out_ch,
        })
    }

    pub fn finish(self, num_outputs: usize) -> Result<ComputeGraph, BuildError> {
        let graph = ComputeGraph {
            nodes: self.nodes,
            weight_slots: self.slots,
            input_shape: self.input_shape,
            num_outputs,
        };
        graph.validate()?;
        Ok(graph)
    }
}

/// Lowers a validated spec into a compute graph for `input_hw` inputs with
/// `num_classes` output channels (overriding the spec's class count).
pub fn build_graph(
    spec: &ModelSpec,
    input_hw: (usize, usize),
    num_classes: usize,
) -> Result<ComputeGraph, BuildError> {
    let violations = crate::archspec::validate_spec(spec);
    if !violations.is_empty() {
        let joined: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(BuildError::InvalidSpec(joined.join("; ")));
    }
    let (h, w) = input_hw;
    let max_level = spec.max_level();
    let divisor = 1usize << max_level;
    if h == 0 || w == 0 || h % divisor != 0 || w % divisor != 0 {
        return Err(BuildError::IndivisibleInput {
            h,
            w,
            level: max_level,
        });
    }

    let mut g = GraphBuilder::new((h, w, 3));
    let family = spec.family;
    let out_mult = family.output_multiplier() as usize;

    // Stem: 3x3 stride-2 conv at the L2 width, bn, act, stride-2 max-pool.
    let stem_width = spec.scaled_width(family.level_dim(2)) as usize;
    g.set_segment(Segment::Stem, None);
    let stem = g.conv_bn_act("stem", GRAPH_INPUT, 3, 2, 1, 3, stem_width);
    let stem_pool = g.push(
        Op::MaxPool {
            kernel: 3,
            stride: 2,
        },
        vec![stem],
        vec![],
    );
    let mut prev = Feature {
        node: stem_pool,
        level: 2,
        channels: stem_width,
        feature_dim: stem_width,
    };

    let mut features: Vec<Feature> = Vec::with_capacity(spec.blocks.len());
    for block in &spec.blocks {
        let level = block.final_level();
        let f_eff = spec.scaled_width(block.feature_dim) as usize;
        let width_in = out_mult * f_eff;
        g.set_segment(Segment::Block(block.id), Some(level));

        let fused = if block.kind == BlockKind::Initial {
            prev
        } else {
            if let Some(source) = block.long_range {
                if source >= features.len() {
                    return Err(BuildError::DanglingConnection {
                        block: block.id,
                        input_id: source,
                    });
                }
            }
            let adjacent = features[block.id - 1];
            // a searched connection equal to the adjacent edge collapses
            let long = block
                .long_range
                .filter(|&s| s != block.id - 1)
                .map(|s| features[s]);
            let a = g.make_resample(&format!("block{}.in0", block.id), adjacent, level, width_in);
            let merged = match long {
                Some(src) => {
                    let b =
                        g.make_resample(&format!("block{}.in1", block.id), src, level, width_in);
                    g.add(a.node, b.node)
                }
                None => a.node,
            };
            let node = g.relu(merged);
            Feature {
                node,
                level,
                channels: width_in,
                feature_dim: f_eff,
            }
        };

        let mut out = fused;
        for rep in 0..block.repeats {
            out = g.make_block(
                &format!("block{}.r{}", block.id, rep),
                out,
                family,
                f_eff,
                block.dilation as usize,
            );
        }
        features.push(out);
        prev = out;
    }

    let backbone_out = *features.last().expect("validated non-empty");

    g.set_segment(Segment::Aspp, None);
    let head_dim = spec.head_dim as usize;
    let separable = spec.separable_head();
    let aspp = g.make_aspp("aspp", backbone_out, &spec.aspp_rates, head_dim, separable)?;

    g.set_segment(Segment::Head, None);
    let mut head = aspp;
    for i in 0..spec.head_convs_n {
        let node = g.spatial_conv_bn_act(
            &format!("head.{i}"),
            head.node,
            1,
            head.channels,
            head_dim,
            separable,
        );
        head = Feature {
            node,
            level: head.level,
            channels: head_dim,
            feature_dim: head_dim,
        };
    }

    g.set_segment(Segment::Classifier, None);
    let logits = g.conv(
        "classifier",
        head.node,
        3,
        1,
        1,
        head_dim,
        num_classes,
        true,
    );

    g.set_segment(Segment::Output, None);
    g.push(
        Op::ResizeBilinear { target_stride: 1 },
        vec![logits],
        vec![],
    );

    g.finish(num_classes)
}

/// Convenience wrapper using the spec's own class count.
pub fn build(spec: &ModelSpec, input_hw: (usize, usize)) -> Result<ComputeGraph, BuildError> {
    build_graph(spec, input_hw, spec.num_classes as usize)
}

fn level_color(level: Option<u32>) -> &'static str {
    match level {
        Some(1) => "#e6ccff",
        Some(2) => "#b39ddb", // purple
        Some(3) => "#fff176", // yellow
        Some(4) => "#81c784", // green
        Some(5) => "#64b5f6", // blue
        Some(6) => "#4f81bd",
        Some(7) => "#2c4f81",
        _ => "#d9d9d9",
    }
}

/// Deterministic DOT rendering: one vertex per node, color-keyed by block level.
pub fn export_dot(graph: &ComputeGraph) -> String {
    let mut out = String::new();
    writeln!(out, "digraph spineseg {{").unwrap();
    writeln!(out, "    rankdir=TB;").unwrap();
    writeln!(
        out,
        "    node [shape=box, style=filled, fontname=\"monospace\"];"
    )
    .unwrap();
    for node in &graph.nodes {
        let attrs = node.op.attrs();
        let label = if attrs.is_empty() {
            format!("{}\\n[{}]", node.op.name(), node.segment.label())
        } else {
            format!("{} {}\\n[{}]", node.op.name(), attrs, node.segment.label())
        };
        writeln!(
            out,
            "    n{} [label=\"{}\", fillcolor=\"{}\"];",
            node.id,
            label,
            level_color(node.level)
        )
        .unwrap();
    }
    for node in &graph.nodes {
        for &input in &node.inputs {
            writeln!(out, "    n{} -> n{};", input, node.id).unwrap();
        }
    }
    writeln!(out, "}}").unwrap();
    out
}

/// Graph summary as JSON: node list with attrs, consumed slots, and output
/// shapes at the graph's build-time input size.
pub fn summary_json(graph: &ComputeGraph) -> Result<serde_json::Value, BuildError> {
    let shapes = graph.infer_shapes((graph.input_shape.0, graph.input_shape.1))?;
    let nodes: Vec<serde_json::Value> = graph
        .nodes
        .iter()
        .map(|n| {
            serde_json::json!({
                "id": n.id,
                "op": n.op.name(),
                "attrs": n.op.attrs(),
                "inputs": n.inputs,
                "weights": n.weights,
                "segment": n.segment.label(),
                "level": n.level,
                "output_shape": [shapes[n.id].0, shapes[n.id].1, shapes[n.id].2],
            })
        })
        .collect();
    Ok(serde_json::json!({
        "input_shape": [graph.input_shape.0, graph.input_shape.1, graph.input_shape.2],
        "num_outputs": graph.num_outputs,
        "nodes": nodes,
        "weight_slots": graph.weight_slots,
    }))
}
