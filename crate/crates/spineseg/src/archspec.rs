//! Architecture DSL for the SpineNet-Seg model family.
//!
//! A [`ModelSpec`] is an ordered list of [`BlockSpec`]s plus the stem/head
//! configuration. Specs are plain immutable values; all transformations here
//! (`scale_spec`, `to_mobile`, `set_output_stride`) return new specs and the
//! named builders (`spinenet_s49_spec`, `resnet_s50_spec`, ...) encode the
//! published configurations.

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, SpecError};

/// Role of a block within the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Stem-fed block with no searched attributes.
    Initial,
    Intermediate,
    /// Final block; its level fixes the output stride.
    Output,
}

/// Block operator family used for every block of a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockFamily {
    /// Residual bottleneck: 1x1 reduce -> 3x3 -> 1x1 expand (x4).
    Bottleneck,
    /// Mobile inverted bottleneck: 1x1 expand (x6) -> 3x3 depthwise -> 1x1 project.
    InvertedBottleneck,
}

impl BlockFamily {
    /// Feature dimension assigned to a level (the block's inner width).
    /// Levels above 5 share the level-5 dimension.
    pub fn level_dim(self, level: u32) -> u32 {
        match self {
            BlockFamily::Bottleneck => match level {
                1 => 32,
                2 => 64,
                3 => 128,
                4 => 256,
                _ => 512,
            },
            BlockFamily::InvertedBottleneck => match level {
                1 => 16,
                2 => 24,
                3 => 40,
                4 => 80,
                _ => 112,
            },
        }
    }

    /// Width of a block's input/output tensor relative to its feature dim.
    pub fn output_multiplier(self) -> u32 {
        match self {
            BlockFamily::Bottleneck => 4,
            BlockFamily::InvertedBottleneck => 1,
        }
    }

    /// Default expansion factor (output expansion for bottlenecks, inner
    /// expansion for inverted bottlenecks).
    pub fn expansion(self) -> u32 {
        match self {
            BlockFamily::Bottleneck => 4,
            BlockFamily::InvertedBottleneck => 6,
        }
    }
}

/// One block row of a model spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub id: usize,
    /// Base resolution level; the block runs at 1/2^(level+adjustment) of the input.
    pub level: u32,
    /// Searched cross-scale input (block id), in addition to the implicit
    /// adjacent edge from block id-1.
    pub long_range: Option<usize>,
    /// Level adjustment in {-1, 0}; -1 doubles the block's spatial resolution.
    pub adjustment: i32,
    /// Dilation ratio of the block's 3x3 convolution, in {1, 2, 4}.
    pub dilation: u32,
    /// Inner convolution width.
    pub feature_dim: u32,
    pub kind: BlockKind,
    /// Number of sequential replicas of this block.
    pub repeats: u32,
}

impl BlockSpec {
    /// Resolution level after applying the searched adjustment.
    pub fn final_level(&self) -> u32 {
        (self.level as i32 + self.adjustment) as u32
    }
}

/// ASPP dilation rates used for the PASCAL-style configuration.
pub const ASPP_RATES_THREE: [u32; 3] = [12, 24, 36];
/// ASPP dilation rates used for the Cityscapes-style configuration.
pub const ASPP_RATES_FOUR: [u32; 4] = [12, 24, 36, 72];

/// Channel width of the ASPP branches and head convolutions.
pub const HEAD_DIM: u32 = 256;

/// A complete serializable architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: BlockFamily,
    pub expansion: u32,
    /// Multiplier applied to backbone convolution widths at lowering time,
    /// rounded to the nearest multiple of 8 (floor 8).
    pub filter_multiplier: f64,
    pub output_stride: u32,
    pub aspp_rates: Vec<u32>,
    /// Number of 3x3 conv+bn+act layers between ASPP and the classifier.
    pub head_convs_n: u32,
    pub head_dim: u32,
    pub num_classes: u32,
    pub blocks: Vec<BlockSpec>,
}

impl ModelSpec {
    /// Effective backbone width for a feature dimension after the filter
    /// multiplier: nearest multiple of 8, minimum 8.
    pub fn scaled_width(&self, feature_dim: u32) -> u32 {
        scale_width(feature_dim, self.filter_multiplier)
    }

    /// Largest final level over all blocks; inputs must divide by 2^this.
    pub fn max_level(&self) -> u32 {
        self.blocks
            .iter()
            .map(|b| b.final_level())
            .max()
            .unwrap_or(1)
    }

    pub fn output_block(&self) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.kind == BlockKind::Output)
    }

    /// Whether ASPP/head 3x3 convolutions are lowered as depthwise-separable pairs.
    pub fn separable_head(&self) -> bool {
        self.family == BlockFamily::InvertedBottleneck
    }
}

/// Nearest multiple of 8 (half rounds up), floored at 8.
pub fn scale_width(base: u32, multiplier: f64) -> u32 {
    let scaled = base as f64 * multiplier;
    let rounded = ((scaled / 8.0) + 0.5).floor() * 8.0;
    (rounded as u32).max(8)
}

/// The learned SpineNet-S49 block table: (level, long-range, adjustment,
/// dilation, feature dim). Blocks 0-1 are the initial blocks and block 21 is
/// the output block (level given as its final L3 / output-stride-8 position).
const S49_BLOCKS: [(u32, Option<usize>, i32, u32, u32); 22] = [
    (2, None, 0, 1, 64),
    (2, None, 0, 1, 64),
    (3, Some(0), -1, 1, 64),
    (4, Some(1), -1, 2, 128),
    (3, Some(1), 0, 1, 128),
    (3, Some(2), 0, 1, 128),
    (6, Some(3), 0, 1, 512),
    (6, Some(5), -1, 2, 512),
    (7, Some(4), 0, 1, 512),
    (7, Some(6), 0, 4, 512),
    (5, Some(6), 0, 1, 512),
    (5, Some(7), 0, 2, 512),
    (4, Some(8), 0, 4, 256),
    (4, Some(9), 0, 1, 256),
    (5, Some(11), 0, 4, 512),
    (4, Some(11), 0, 4, 256),
    (4, Some(12), 0, 1, 256),
    (2, Some(14), 0, 4, 64),
    (7, Some(16), -1, 2, 512),
    (6, Some(15), 0, 1, 512),
    (4, Some(17), -1, 4, 128),
    (3, Some(0), 0, 1, 128),
];

/// The 22-block SpineNet-S49 spec (bottleneck family, output stride 8).
pub fn spinenet_s49_spec(num_classes: u32) -> ModelSpec {
    let blocks = S49_BLOCKS
        .iter()
        .enumerate()
        .map(
            |(id, &(level, long_range, adjustment, dilation, feature_dim))| BlockSpec {
                id,
                level,
                long_range,
                adjustment,
                dilation,
                feature_dim,
                kind: if id <= 1 {
                    BlockKind::Initial
                } else if id == S49_BLOCKS.len() - 1 {
                    BlockKind::Output
                } else {
                    BlockKind::Intermediate
                },
                repeats: 1,
            },
        )
        .collect();
    ModelSpec {
        family: BlockFamily::Bottleneck,
        expansion: 4,
        filter_multiplier: 1.0,
        output_stride: 8,
        aspp_rates: ASPP_RATES_THREE.to_vec(),
        head_convs_n: 0,
        head_dim: HEAD_DIM,
        num_classes,
        blocks,
    }
}

/// SpineNet-S96: every S49 block repeated twice.
pub fn spinenet_s96_spec(num_classes: u32) -> ModelSpec {
    scale_spec(&spinenet_s49_spec(num_classes), 2, 1.0).expect("valid scale")
}

/// SpineNet-S143: every S49 block repeated three times.
pub fn spinenet_s143_spec(num_classes: u32) -> ModelSpec {
    scale_spec(&spinenet_s49_spec(num_classes), 3, 1.0).expect("valid scale")
}

/// SpineNet-S143+: S143 with 1.3x backbone widths, output stride 4, a two-conv
/// head, and the four-rate ASPP.
pub fn spinenet_s143plus_spec(num_classes: u32) -> ModelSpec {
    let mut spec = scale_spec(&spinenet_s49_spec(num_classes), 3, 1.3).expect("valid scale");
    spec = set_output_stride(&spec, 4).expect("valid output stride");
    spec.head_convs_n = 2;
    spec.aspp_rates = ASPP_RATES_FOUR.to_vec();
    spec
}

/// Mobile SpineNet-S49 (inverted bottlenecks, four-rate ASPP).
pub fn mobile_spinenet_s49_spec(num_classes: u32) -> ModelSpec {
    let mut base = spinenet_s49_spec(num_classes);
    base.aspp_rates = ASPP_RATES_FOUR.to_vec();
    to_mobile(&base, 1.0).expect("valid mobilization")
}

/// Mobile SpineNet-S49-: the mobile variant with 0.65x backbone widths.
pub fn mobile_spinenet_s49minus_spec(num_classes: u32) -> ModelSpec {
    let mut base = spinenet_s49_spec(num_classes);
    base.aspp_rates = ASPP_RATES_FOUR.to_vec();
    to_mobile(&base, 0.65).expect("valid mobilization")
}

/// The sequential ResNet-S50 search baseline: 2 initial L2 blocks, the
/// {1xL2, 3xL3, 6xL4, 3xL5, 3xL6, 3xL7} intermediate allocation with
/// downsampling at the first block of each stage, and an L4 output block
/// (output stride 16). Used as the search baseline and FLOP-budget reference.
pub fn resnet_s50_spec(num_classes: u32) -> ModelSpec {
    let family = BlockFamily::Bottleneck;
    let levels: Vec<u32> = [
        vec![2, 2, 2],
        vec![3, 3, 3],
        vec![4, 4, 4, 4, 4, 4],
        vec![5, 5, 5],
        vec![6, 6, 6],
        vec![7, 7, 7],
    ]
    .concat();
    let mut blocks: Vec<BlockSpec> = levels
        .iter()
        .enumerate()
        .map(|(id, &level)| BlockSpec {
            id,
            level,
            long_range: None,
            adjustment: 0,
            dilation: 1,
            feature_dim: family.level_dim(level),
            kind: if id <= 1 {
                BlockKind::Initial
            } else {
                BlockKind::Intermediate
            },
            repeats: 1,
        })
        .collect();
    blocks.push(BlockSpec {
        id: blocks.len(),
        level: 4,
        long_range: None,
        adjustment: 0,
        dilation: 1,
        feature_dim: family.level_dim(4),
        kind: BlockKind::Output,
        repeats: 1,
    });
    ModelSpec {
        family,
        expansion: 4,
        filter_multiplier: 1.0,
        output_stride: 16,
        aspp_rates: ASPP_RATES_THREE.to_vec(),
        head_convs_n: 0,
        head_dim: HEAD_DIM,
        num_classes,
        blocks,
    }
}

/// Sets every block's repeat count and folds a width multiplier into the spec.
/// Replicas are sequential; no new cross-scale connections are introduced.
pub fn scale_spec(
    spec: &ModelSpec,
    block_repeats: u32,
    filter_multiplier: f64,
) -> Result<ModelSpec, SpecError> {
    if !(1..=3).contains(&block_repeats) {
        return Err(SpecError::InvalidRepeats(block_repeats));
    }
    if filter_multiplier.is_nan() || filter_multiplier <= 0.0 {
        return Err(SpecError::InvalidMultiplier(filter_multiplier));
    }
    let mut out = spec.clone();
    for block in &mut out.blocks {
        block.repeats = block_repeats;
    }
    out.filter_multiplier = spec.filter_multiplier * filter_multiplier;
    Ok(out)
}

/// Converts a bottleneck spec to the mobile (inverted-bottleneck) family:
/// feature dims are remapped per final level, the filter multiplier is set to
/// `filter_scale`, and the ASPP/head switch to depthwise-separable convs.
pub fn to_mobile(spec: &ModelSpec, filter_scale: f64) -> Result<ModelSpec, SpecError> {
    if spec.family != BlockFamily::Bottleneck {
        return Err(SpecError::AlreadyMobile);
    }
    if filter_scale.is_nan() || filter_scale <= 0.0 {
        return Err(SpecError::InvalidMultiplier(filter_scale));
    }
    let mut out = spec.clone();
    out.family = BlockFamily::InvertedBottleneck;
    out.expansion = BlockFamily::InvertedBottleneck.expansion();
    out.filter_multiplier = filter_scale;
    for block in &mut out.blocks {
        block.feature_dim = BlockFamily::InvertedBottleneck.level_dim(block.final_level());
    }
    Ok(out)
}

/// Moves only the output block to log2(os), remapping its feature dim to the
/// new level; all other blocks are preserved.
pub fn set_output_stride(spec: &ModelSpec, os: u32) -> Result<ModelSpec, SpecError> {
    if !matches!(os, 4 | 8 | 16) {
        return Err(SpecError::InvalidOutputStride(os));
    }
    let mut out = spec.clone();
    out.output_stride = os;
    let level = os.trailing_zeros();
    let family = out.family;
    for block in &mut out.blocks {
        if block.kind == BlockKind::Output {
            block.level = (level as i32 - block.adjustment) as u32;
            block.feature_dim = family.level_dim(block.final_level());
        }
    }
    Ok(out)
}

/// One failed spec invariant. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending block id, when the rule is block-scoped.
    pub block: Option<usize>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.block {
            Some(id) => write!(f, "block {}: {}", id, self.rule),
            None => write!(f, "spec: {}", self.rule),
        }
    }
}

/// Checks every block- and spec-level invariant; empty result means valid.
pub fn validate_spec(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |block: Option<usize>, rule: String| out.push(Violation { block, rule });

    if spec.blocks.is_empty() {
        push(None, "spec has no blocks".into());
        return out;
    }
    if !matches!(spec.output_stride, 4 | 8 | 16) {
        push(
            None,
            format!("output_stride {} not in {{4, 8, 16}}", spec.output_stride),
        );
    }
    if spec.aspp_rates.is_empty() {
        push(None, "aspp_rates is empty".into());
    }
    let mut seen = std::collections::HashSet::new();
    for &r in &spec.aspp_rates {
        if !seen.insert(r) {
            push(None, format!("aspp_rates contains duplicate rate {r}"));
        }
    }
    if spec.num_classes == 0 {
        push(None, "num_classes must be positive".into());
    }
    if spec.head_dim == 0 {
        push(None, "head_dim must be positive".into());
    }

    for (index, block) in spec.blocks.iter().enumerate() {
        let id = block.id;
        if id != index {
            push(
                Some(id),
                format!("id {} out of order at position {}", id, index),
            );
        }
        if !(1..=7).contains(&block.level) {
            push(Some(id), format!("level {} outside [1, 7]", block.level));
        }
        if !matches!(block.adjustment, -1 | 0) {
            push(
                Some(id),
                format!("adjustment {} not in {{-1, 0}}", block.adjustment),
            );
        }
        if block.level as i32 + block.adjustment < 1 {
            push(Some(id), "final level below L1".into());
        }
        if !matches!(block.dilation, 1 | 2 | 4) {
            push(
                Some(id),
                format!("dilation {} not in {{1, 2, 4}}", block.dilation),
            );
        }
        if block.feature_dim == 0 {
            push(Some(id), "feature_dim must be positive".into());
        }
        if block.repeats == 0 {
            push(Some(id), "repeats must be positive".into());
        }
        if let Some(source) = block.long_range {
            if source >= id {
                push(
                    Some(id),
                    format!("cycle: long_range {} does not precede block", source),
                );
            }
        }
        if block.kind == BlockKind::Initial
            && (block.long_range.is_some() || block.adjustment != 0 || block.dilation != 1)
        {
            push(
                Some(id),
                "initial block must have no long_range, adjustment 0, dilation 1".into(),
            );
        }
    }

    let outputs: Vec<&BlockSpec> = spec
        .blocks
        .iter()
        .filter(|b| b.kind == BlockKind::Output)
        .collect();
    match outputs.as_slice() {
        [only] => {
            if only.id != spec.blocks.len() - 1 {
                push(Some(only.id), "output block is not last".into());
            }
            let expected = spec.output_stride.trailing_zeros();
            if only.final_level() != expected {
                push(
                    Some(only.id),
                    format!(
                        "output block final level L{} does not match output stride {} (expected L{})",
                        only.final_level(),
                        spec.output_stride,
                        expected
                    ),
                );
            }
        }
        [] => push(None, "spec has no output block".into()),
        many => {
            for b in &many[1..] {
                push(Some(b.id), "more than one output block".into());
            }
        }
    }
    out
}

/// Canonical JSON serialization of a spec; stable under parse/serialize.
pub fn serialize_spec(spec: &ModelSpec) -> String {
    let mut text = serde_json::to_string_pretty(spec).expect("spec serializes");
    text.push('\n');
    text
}

/// Parses a spec from its JSON form. Unknown fields are rejected; errors carry
/// serde's line/column diagnostics.
pub fn parse_spec(text: &str) -> Result<ModelSpec, ParseError> {
    serde_json::from_str(text).map_err(|err| {
        // name the block list first when it is among the missing fields
        if err.to_string().starts_with("missing field") {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
                if value.is_object() && value.get("blocks").is_none() {
                    return ParseError(serde::de::Error::custom("missing field `blocks`"));
                }
            }
        }
        ParseError(err)
    })
}
