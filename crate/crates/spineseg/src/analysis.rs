//! Static cost analysis of compute graphs: parameter counts, multiply-add /
//! FLOP counts at a given input size, output stride, and receptive field.
//!
//! FLOP convention: 2 x multiply-adds for convolutions; batch norm,
//! activations, adds, and resizes cost 2 per output element; global average
//! pooling costs 2 per input element; max pooling 2 x window per output
//! element; concatenation is free. Both multiply-adds and FLOPs are reported.

use serde::Serialize;

use crate::anchors::{find_anchor, Anchor};
use crate::archspec::ModelSpec;
use crate::error::AnalysisError;
use crate::graphbuilder::{build_graph, ComputeGraph, Node, Op};

/// Trainable parameters of one node: conv kernels (+ classifier bias) and
/// batch-norm scale/offset. Running statistics are not counted.
fn node_params(graph: &ComputeGraph, node: &Node) -> u64 {
    match &node.op {
        Op::Conv2d { bias, .. } => {
            let kernel: usize = graph.weight_slots[&node.weights[0]].iter().product();
            let bias_len: usize = if *bias {
                graph.weight_slots[&node.weights[1]].iter().product()
            } else {
                0
            };
            (kernel + bias_len) as u64
        }
        Op::DepthwiseConv2d { .. } => graph.weight_slots[&node.weights[0]]
            .iter()
            .product::<usize>() as u64,
        Op::BatchNorm { channels } => 2 * *channels as u64,
        _ => 0,
    }
}

fn node_flops(
    node: &Node,
    in_shape: (usize, usize, usize),
    out_shape: (usize, usize, usize),
) -> u64 {
    let out_elems = (out_shape.0 * out_shape.1 * out_shape.2) as u64;
    match &node.op {
        Op::Conv2d {
            kernel,
            in_ch,
            out_ch,
            bias,
            ..
        } => {
            let spatial = (out_shape.0 * out_shape.1) as u64;
            let mut f = 2 * (kernel * kernel * in_ch * out_ch) as u64 * spatial;
            if *bias {
                f += out_elems;
            }
            f
        }
        Op::DepthwiseConv2d {
            kernel, channels, ..
        } => {
            let spatial = (out_shape.0 * out_shape.1) as u64;
            2 * (kernel * kernel * channels) as u64 * spatial
        }
        Op::BatchNorm { .. }
        | Op::Activation
        | Op::Add
        | Op::ResizeNearest { .. }
        | Op::ResizeBilinear { .. } => 2 * out_elems,
        Op::GlobalAvgPool => 2 * (in_shape.0 * in_shape.1 * in_shape.2) as u64,
        Op::MaxPool { kernel, .. } => 2 * (kernel * kernel) as u64 * out_elems,
        Op::Concat => 0,
    }
}

/// Total trainable parameter count; independent of input size.
pub fn count_params(graph: &ComputeGraph) -> u64 {
    graph.nodes.iter().map(|n| node_params(graph, n)).sum()
}

/// Total FLOPs for a single input of the given size.
pub fn count_flops(graph: &ComputeGraph, input_hw: (usize, usize)) -> Result<u64, AnalysisError> {
    let shapes = graph
        .infer_shapes(input_hw)
        .map_err(|_| AnalysisError::IndivisibleInput {
            h: input_hw.0,
            w: input_hw.1,
        })?;
    let input = (input_hw.0, input_hw.1, graph.input_shape.2);
    Ok(graph
        .nodes
        .iter()
        .map(|n| {
            let in_shape = n.inputs.first().map_or(input, |&i| shapes[i]);
            node_flops(n, in_shape, shapes[n.id])
        })
        .sum())
}

/// Input extent divided by the spatial extent at the pre-upsample classifier
/// output.
pub fn output_stride_of(graph: &ComputeGraph) -> Result<usize, AnalysisError> {
    let (h, w) = (graph.input_shape.0, graph.input_shape.1);
    let shapes = graph
        .infer_shapes((h, w))
        .map_err(|_| AnalysisError::IndivisibleInput { h, w })?;
    let classifier = graph
        .classifier_node()
        .ok_or(AnalysisError::NonUniformStride { h: 0.0, w: 0.0 })?;
    let (oh, ow, _) = shapes[classifier];
    let rh = h as f64 / oh as f64;
    let rw = w as f64 / ow as f64;
    if rh != rw || rh.fract() != 0.0 {
        return Err(AnalysisError::NonUniformStride { h: rh, w: rw });
    }
    Ok(rh as usize)
}

/// Receptive field at the graph output via the standard recursion over
/// kernels, strides, and dilations along the deepest path; resize nodes scale
/// the inter-pixel jump by their factor, and global pooling covers the whole
/// extent of its input.
pub fn receptive_field(graph: &ComputeGraph) -> (u64, u64) {
    let shapes = graph
        .infer_shapes((graph.input_shape.0, graph.input_shape.1))
        .unwrap_or_else(|_| vec![(1, 1, 1); graph.nodes.len()]);
    // (rf_h, rf_w, jump_h, jump_w) in input pixels
    let input_state = (1.0f64, 1.0f64, 1.0f64, 1.0f64);
    let mut states: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let merged = if node.inputs.is_empty() {
            input_state
        } else {
            node.inputs.iter().map(|&i| states[i]).fold(
                (0.0f64, 0.0f64, 0.0f64, 0.0f64),
                |acc, s| {
                    (
                        acc.0.max(s.0),
                        acc.1.max(s.1),
                        acc.2.max(s.2),
                        acc.3.max(s.3),
                    )
                },
            )
        };
        let (mut rf_h, mut rf_w, mut jump_h, mut jump_w) = merged;
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
                rf_h += ((kernel - 1) * dilation) as f64 * jump_h;
                rf_w += ((kernel - 1) * dilation) as f64 * jump_w;
                jump_h *= *stride as f64;
                jump_w *= *stride as f64;
            }
            Op::MaxPool { kernel, stride } => {
                rf_h += (kernel - 1) as f64 * jump_h;
                rf_w += (kernel - 1) as f64 * jump_w;
                jump_h *= *stride as f64;
                jump_w *= *stride as f64;
            }
            Op::ResizeNearest { factor } => {
                jump_h /= *factor as f64;
                jump_w /= *factor as f64;
            }
            Op::ResizeBilinear { .. } => {
                let in_shape = node.inputs.first().map(|&i| shapes[i]);
                let out_shape = shapes[node.id];
                if let Some(ins) = in_shape {
                    jump_h *= ins.0 as f64 / out_shape.0 as f64;
                    jump_w *= ins.1 as f64 / out_shape.1 as f64;
                }
            }
            Op::GlobalAvgPool => {
                let in_shape = node.inputs.first().map(|&i| shapes[i]).unwrap_or((1, 1, 1));
                rf_h += (in_shape.0 - 1) as f64 * jump_h;
                rf_w += (in_shape.1 - 1) as f64 * jump_w;
                jump_h *= in_shape.0 as f64;
                jump_w *= in_shape.1 as f64;
            }
            Op::BatchNorm { .. } | Op::Activation | Op::Add | Op::Concat => {}
        }
        states.push((rf_h, rf_w, jump_h, jump_w));
    }
    let last = states.last().copied().unwrap_or(input_state);
    (last.0.ceil() as u64, last.1.ceil() as u64)
}

/// Per-node cost row of the stats report.
#[derive(Debug, Clone, Serialize)]
pub struct NodeStats {
    pub id: usize,
    pub op: String,
    pub attrs: String,
    pub segment: String,
    pub params: u64,
    pub flops: u64,
    pub output_shape: (usize, usize, usize),
}

/// Deviation report against a published reference configuration.
#[derive(Debug, Clone, Serialize)]
pub struct AnchorReport {
    pub name: String,
    pub context: String,
    pub published_params_m: f64,
    pub actual_params_m: f64,
    pub params_deviation_pct: f64,
    pub published_flops_b: Option<f64>,
    pub actual_flops_b: f64,
}

/// Aggregated cost report for one model at one input size.
#[derive(Debug, Clone, Serialize)]
pub struct ModelStats {
    pub input_hw: (usize, usize),
    pub total_params: u64,
    pub total_madds: u64,
    pub total_flops: u64,
    pub output_stride: usize,
    pub receptive_field: (u64, u64),
    /// (group, params, flops) for backbone / aspp / head.
    pub per_group: Vec<(String, u64, u64)>,
    pub per_node: Vec<NodeStats>,
    pub notes: Vec<String>,
    pub anchor: Option<AnchorReport>,
}

impl ModelStats {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("stats serialize")
    }

    /// Aligned plain-text table: totals, per-group split, anchor deviation,
    /// then one row per node.
    pub fn to_table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "input: {}x{}", self.input_hw.0, self.input_hw.1).unwrap();
        writeln!(
            out,
            "params: {} ({:.3} M)",
            self.total_params,
            self.total_params as f64 / 1e6
        )
        .unwrap();
        writeln!(
            out,
            "multiply-adds: {} ({:.3} B)   flops (2x madds): {} ({:.3} B)",
            self.total_madds,
            self.total_madds as f64 / 1e9,
            self.total_flops,
            self.total_flops as f64 / 1e9
        )
        .unwrap();
        writeln!(out, "output stride: {}", self.output_stride).unwrap();
        writeln!(
            out,
            "receptive field: {}x{}",
            self.receptive_field.0, self.receptive_field.1
        )
        .unwrap();
        writeln!(out, "{:<10} {:>14} {:>18}", "group", "params", "flops").unwrap();
        for (group, params, flops) in &self.per_group {
            writeln!(out, "{:<10} {:>14} {:>18}", group, params, flops).unwrap();
        }
        if let Some(anchor) = &self.anchor {
            writeln!(
                out,
                "anchor {}: published {:.2} M params, actual {:.3} M ({:+.2}%)",
                anchor.name,
                anchor.published_params_m,
                anchor.actual_params_m,
                anchor.params_deviation_pct
            )
            .unwrap();
            if let Some(fb) = anchor.published_flops_b {
                writeln!(
                    out,
                    "anchor {}: published {:.0} B flops, actual {:.2} B at this input (resolution-dependent; ratios are the comparable quantity)",
                    anchor.name, fb, anchor.actual_flops_b
                )
                .unwrap();
            }
        }
        for note in &self.notes {
            writeln!(out, "note: {note}").unwrap();
        }
        writeln!(
            out,
            "{:<6} {:<18} {:<28} {:<12} {:>12} {:>16} {:>16}",
            "id", "op", "attrs", "segment", "params", "flops", "shape"
        )
        .unwrap();
        for n in &self.per_node {
            writeln!(
                out,
                "{:<6} {:<18} {:<28} {:<12} {:>12} {:>16} {:>16}",
                n.id,
                n.op,
                n.attrs,
                n.segment,
                n.params,
                n.flops,
                format!(
                    "{}x{}x{}",
                    n.output_shape.0, n.output_shape.1, n.output_shape.2
                )
            )
            .unwrap();
        }
        out
    }
}

/// Builds the spec's graph and assembles the full cost report, comparing
/// against a published anchor when the spec matches a named configuration.
pub fn summarize(
    spec: &ModelSpec,
    input_hw: (usize, usize),
    num_classes: usize,
) -> Result<ModelStats, AnalysisError> {
    let graph = build_graph(spec, input_hw, num_classes)?;
    stats_for_graph(spec, &graph, input_hw)
}

/// Stats for an already-built graph.
pub fn stats_for_graph(
    spec: &ModelSpec,
    graph: &ComputeGraph,
    input_hw: (usize, usize),
) -> Result<ModelStats, AnalysisError> {
    let shapes = graph
        .infer_shapes(input_hw)
        .map_err(|_| AnalysisError::IndivisibleInput {
            h: input_hw.0,
            w: input_hw.1,
        })?;
    let input = (input_hw.0, input_hw.1, graph.input_shape.2);
    let mut per_node = Vec::with_capacity(graph.nodes.len());
    let mut groups: std::collections::BTreeMap<&'static str, (u64, u64)> = Default::default();
    let mut total_params = 0u64;
    let mut total_flops = 0u64;
    for node in &graph.nodes {
        let params = node_params(graph, node);
        let in_shape = node.inputs.first().map_or(input, |&i| shapes[i]);
        let flops = node_flops(node, in_shape, shapes[node.id]);
        total_params += params;
        total_flops += flops;
        let g = groups.entry(node.segment.group()).or_default();
        g.0 += params;
        g.1 += flops;
        per_node.push(NodeStats {
            id: node.id,
            op: node.op.name().to_string(),
            attrs: node.op.attrs(),
            segment: node.segment.label(),
            params,
            flops,
            output_shape: shapes[node.id],
        });
    }
    let per_group = ["backbone", "aspp", "head"]
        .iter()
        .map(|&g| {
            let (p, f) = groups.get(g).copied().unwrap_or_default();
            (g.to_string(), p, f)
        })
        .collect();

    let anchor = find_anchor(spec).map(|a: &Anchor| {
        let actual_m = total_params as f64 / 1e6;
        AnchorReport {
            name: a.name.to_string(),
            context: a.context.to_string(),
            published_params_m: a.params_m,
            actual_params_m: actual_m,
            params_deviation_pct: 100.0 * (actual_m / a.params_m - 1.0),
            published_flops_b: a.flops_b,
            actual_flops_b: total_flops as f64 / 1e9,
        }
    });

    let mut notes = vec![
        "flops = 2 x multiply-adds for convolutions; non-conv ops cost 2 per element".to_string(),
        "batch-norm running statistics are not counted as parameters".to_string(),
    ];
    if (spec.filter_multiplier - 1.0).abs() > f64::EPSILON {
        notes.push(format!(
            "filter multiplier {} applies to backbone convolution widths only (ASPP/head keep their dims)",
            spec.filter_multiplier
        ));
    }

    Ok(ModelStats {
        input_hw,
        total_params,
        total_madds: total_flops / 2,
        total_flops,
        output_stride: output_stride_of(graph)?,
        receptive_field: receptive_field(graph),
        per_group,
        per_node,
        notes,
        anchor,
    })
}
