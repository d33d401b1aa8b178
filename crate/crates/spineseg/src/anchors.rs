//! Published cost figures for the named models, used by the `--anchor` report
//! and the acceptance checks. Parameter counts are input-independent; the
//! published FLOP figures were reported without a stated input resolution, so
//! FLOP comparisons are ratio-based.

use crate::archspec::{
    mobile_spinenet_s49_spec, mobile_spinenet_s49minus_spec, resnet_s50_spec, spinenet_s143_spec,
    spinenet_s143plus_spec, spinenet_s49_spec, spinenet_s96_spec, ModelSpec,
};

/// One published reference point for a named model configuration.
pub struct Anchor {
    pub name: &'static str,
    /// Reported parameter count, in millions.
    pub params_m: f64,
    /// Reported FLOPs, in billions, when published for this configuration.
    pub flops_b: Option<f64>,
    /// Which reporting setup the figures come from.
    pub context: &'static str,
    pub build: fn() -> ModelSpec,
}

pub const ANCHORS: &[Anchor] = &[
    Anchor {
        name: "spinenet-s49",
        params_m: 69.0,
        flops_b: Some(98.0),
        context: "PASCAL VOC reporting setup: 21 classes, output stride 8, ASPP rates 12/24/36",
        build: || spinenet_s49_spec(21),
    },
    Anchor {
        name: "spinenet-s96",
        params_m: 116.0,
        flops_b: Some(154.0),
        context: "PASCAL VOC reporting setup: 21 classes, output stride 8, ASPP rates 12/24/36",
        build: || spinenet_s96_spec(21),
    },
    Anchor {
        name: "spinenet-s143",
        params_m: 162.0,
        flops_b: Some(210.0),
        context: "PASCAL VOC reporting setup: 21 classes, output stride 8, ASPP rates 12/24/36",
        build: || spinenet_s143_spec(21),
    },
    Anchor {
        name: "spinenet-s143plus",
        params_m: 275.0,
        flops_b: Some(2766.0),
        context: "Cityscapes reporting setup: 19 classes, output stride 4, two head convs, ASPP rates 12/24/36/72",
        build: || spinenet_s143plus_spec(19),
    },
    Anchor {
        name: "mobile-spinenet-s49",
        params_m: 4.40,
        flops_b: None,
        context: "Cityscapes reporting setup: 19 classes, output stride 8, ASPP rates 12/24/36/72",
        build: || mobile_spinenet_s49_spec(19),
    },
    Anchor {
        name: "mobile-spinenet-s49minus",
        params_m: 3.15,
        flops_b: None,
        context: "Cityscapes reporting setup: 19 classes, output stride 8, ASPP rates 12/24/36/72",
        build: || mobile_spinenet_s49minus_spec(19),
    },
];

/// Published Cityscapes FLOP figures (billions) used for ratio checks.
pub const CITYSCAPES_FLOPS_B: &[(&str, f64)] = &[
    ("spinenet-s49", 798.0),
    ("spinenet-s96", 1272.0),
    ("spinenet-s143", 1722.0),
];

/// Builds the Cityscapes-configured regular model used by the ratio checks
/// (19 classes, four-rate ASPP, output stride 8).
pub fn cityscapes_regular_spec(repeats: u32) -> ModelSpec {
    use crate::archspec::{scale_spec, ASPP_RATES_FOUR};
    let mut spec = spinenet_s49_spec(19);
    spec.aspp_rates = ASPP_RATES_FOUR.to_vec();
    scale_spec(&spec, repeats, 1.0).expect("valid repeats")
}

/// Finds the anchor whose canonical spec exactly matches the given spec.
pub fn find_anchor(spec: &ModelSpec) -> Option<&'static Anchor> {
    ANCHORS.iter().find(|a| &(a.build)() == spec)
}

/// The baseline builder re-exported next to the anchors for budget reporting.
pub fn baseline_spec() -> ModelSpec {
    resnet_s50_spec(21)
}
