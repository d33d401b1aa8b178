//! Construction, analysis, and search toolkit for scale-permuted
//! semantic-segmentation networks (the SpineNet-Seg family).
//!
//! The crate is organized around a small pipeline:
//!
//! - [`archspec`] declares architectures (block tables, named models, spec
//!   transformations, JSON serialization);
//! - [`graphbuilder`] lowers a spec into an executable [`graphbuilder::ComputeGraph`];
//! - [`tensorops`] executes graphs forward with naive reference kernels;
//! - [`analysis`] computes parameter/FLOP costs, output stride, and receptive
//!   field, with comparisons against published figures ([`anchors`]);
//! - [`search`] implements the joint search space with exact size arithmetic
//!   and a seeded random-search driver.

pub mod analysis;
pub mod anchors;
pub mod archspec;
pub mod error;
pub mod graphbuilder;
pub mod search;
pub mod tensorops;
pub mod verify;

pub use analysis::{
    count_flops, count_params, output_stride_of, receptive_field, summarize, ModelStats,
};
pub use archspec::{
    mobile_spinenet_s49_spec, mobile_spinenet_s49minus_spec, parse_spec, resnet_s50_spec,
    scale_spec, serialize_spec, set_output_stride, spinenet_s143_spec, spinenet_s143plus_spec,
    spinenet_s49_spec, spinenet_s96_spec, to_mobile, validate_spec, BlockFamily, BlockKind,
    BlockSpec, ModelSpec,
};
pub use graphbuilder::{build, build_graph, export_dot, summary_json, ComputeGraph};
pub use search::{
    candidate_to_spec, is_feasible, random_search, sample_candidate, search_space_size,
    spec_to_candidate, Candidate, Evaluator, ProxyConfig, SearchConfig,
};
pub use tensorops::{execute, init_random_weights, Tensor, WeightStore};
