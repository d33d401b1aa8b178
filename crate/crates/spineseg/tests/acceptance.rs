//! Acceptance suite. One test per criterion; each prints a PASS/FAIL line
//! (run with `--nocapture` to see them) before asserting.
//!
//! Criteria 1 (mobile anchors), 2 (two of three FLOP ratios), and 8 (candidate
//! feasibility) document known gaps between the published figures and what the
//! specified architecture yields; those tests fail with itemized reports and
//! are expected to stay red until the published figures are reconciled.

use spineseg::analysis::{count_flops, output_stride_of, stats_for_graph};
use spineseg::archspec::{
    mobile_spinenet_s49_spec, mobile_spinenet_s49minus_spec, resnet_s50_spec, set_output_stride,
    spinenet_s143_spec, spinenet_s143plus_spec, spinenet_s49_spec, spinenet_s96_spec, ModelSpec,
};
use spineseg::graphbuilder::{build_graph, Op, Segment};
use spineseg::search::{
    candidate_to_spec, sample_candidate_stream, search_space_size, spec_to_candidate, SearchConfig,
};
use spineseg::tensorops::{
    conv2d, depthwise_conv2d, execute, init_random_weights, write_tensor, Tensor, WeightTensor,
};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn status(criterion: &str, passed: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {criterion}: {} - {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    passed
}

fn param_anchor(criterion: &str, name: &str, spec: &ModelSpec, published_m: f64) {
    let hw = (256, 256);
    let graph = build_graph(spec, hw, spec.num_classes as usize).unwrap();
    let stats = stats_for_graph(spec, &graph, hw).unwrap();
    let actual_m = stats.total_params as f64 / 1e6;
    let deviation = 100.0 * (actual_m / published_m - 1.0);
    let passed = deviation.abs() <= 10.0;
    let breakdown: Vec<String> = stats
        .per_group
        .iter()
        .map(|(g, p, _)| format!("{g} {:.3}M", *p as f64 / 1e6))
        .collect();
    status(
        criterion,
        passed,
        &format!(
            "{name}: published {published_m}M, built {actual_m:.3}M ({deviation:+.2}%); {}",
            breakdown.join(", ")
        ),
    );
    assert!(
        passed,
        "{name} parameter count {actual_m:.3}M deviates {deviation:+.2}% from {published_m}M \
         (itemized: {})",
        breakdown.join(", ")
    );
}

#[test]
fn criterion_1_params_s49() {
    param_anchor(
        "1 (params S49)",
        "SpineNet-S49",
        &spinenet_s49_spec(21),
        69.0,
    );
}

#[test]
fn criterion_1_params_s96() {
    param_anchor(
        "1 (params S96)",
        "SpineNet-S96",
        &spinenet_s96_spec(21),
        116.0,
    );
}

#[test]
fn criterion_1_params_s143() {
    param_anchor(
        "1 (params S143)",
        "SpineNet-S143",
        &spinenet_s143_spec(21),
        162.0,
    );
}

#[test]
fn criterion_1_params_s143plus() {
    param_anchor(
        "1 (params S143+)",
        "SpineNet-S143+",
        &spinenet_s143plus_spec(19),
        275.0,
    );
}

#[test]
fn criterion_1_params_mobile_s49() {
    param_anchor(
        "1 (params Mobile S49)",
        "Mobile SpineNet-S49",
        &mobile_spinenet_s49_spec(19),
        4.40,
    );
}

#[test]
fn criterion_1_params_mobile_s49minus() {
    param_anchor(
        "1 (params Mobile S49-)",
        "Mobile SpineNet-S49-",
        &mobile_spinenet_s49minus_spec(19),
        3.15,
    );
}

fn flops_of(spec: &ModelSpec, hw: (usize, usize)) -> f64 {
    let graph = build_graph(spec, hw, spec.num_classes as usize).unwrap();
    count_flops(&graph, hw).unwrap() as f64
}

fn ratio_anchor(criterion: &str, label: &str, actual: f64, published: f64) {
    let deviation = 100.0 * (actual / published - 1.0);
    let passed = deviation.abs() <= 10.0;
    status(
        criterion,
        passed,
        &format!("{label}: published {published:.4}, built {actual:.4} ({deviation:+.2}%)"),
    );
    assert!(
        passed,
        "{label} ratio {actual:.4} deviates {deviation:+.2}% from {published:.4}"
    );
}

#[test]
fn criterion_2_flop_ratio_s96_over_s49() {
    let hw = (640, 640);
    let ratio = flops_of(&spinenet_s96_spec(21), hw) / flops_of(&spinenet_s49_spec(21), hw);
    ratio_anchor(
        "2 (FLOPs S96/S49)",
        "S96/S49 at 640x640",
        ratio,
        154.0 / 98.0,
    );
}

#[test]
fn criterion_2_flop_ratio_s143_over_s49() {
    let hw = (640, 640);
    let ratio = flops_of(&spinenet_s143_spec(21), hw) / flops_of(&spinenet_s49_spec(21), hw);
    ratio_anchor(
        "2 (FLOPs S143/S49)",
        "S143/S49 at 640x640",
        ratio,
        210.0 / 98.0,
    );
}

#[test]
fn criterion_2_flop_ratio_cityscapes() {
    let hw = (1024, 2048);
    let s49 = spineseg::anchors::cityscapes_regular_spec(1);
    let s96 = spineseg::anchors::cityscapes_regular_spec(2);
    let ratio = flops_of(&s96, hw) / flops_of(&s49, hw);
    let published = |name: &str| {
        spineseg::anchors::CITYSCAPES_FLOPS_B
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .unwrap()
    };
    let expected = published("spinenet-s96") / published("spinenet-s49");
    ratio_anchor(
        "2 (FLOPs Cityscapes)",
        "S96/S49 at 1024x2048",
        ratio,
        expected,
    );
}

#[test]
fn criterion_3_output_stride_law() {
    let hw = (384, 384); // divisible by 128
    let mut all = true;
    let mut report = Vec::new();
    let cases: Vec<(&str, ModelSpec, usize)> = vec![
        ("s49", spinenet_s49_spec(21), 8),
        ("s96", spinenet_s96_spec(21), 8),
        ("s143", spinenet_s143_spec(21), 8),
        ("mobile-s49", mobile_spinenet_s49_spec(19), 8),
        ("mobile-s49minus", mobile_spinenet_s49minus_spec(19), 8),
        (
            "s49-os4",
            set_output_stride(&spinenet_s49_spec(21), 4).unwrap(),
            4,
        ),
        ("resnet-s50", resnet_s50_spec(21), 16),
    ];
    for (name, spec, expected) in cases {
        let graph = build_graph(&spec, hw, spec.num_classes as usize).unwrap();
        let shapes = graph.infer_shapes(hw).unwrap();
        let classifier = graph.classifier_node().unwrap();
        let (oh, ow, _) = shapes[classifier];
        let os = output_stride_of(&graph).unwrap();
        let ok = os == expected && oh == hw.0 / expected && ow == hw.1 / expected;
        all &= ok;
        report.push(format!("{name}={os}"));
    }
    let passed = status("3 (output-stride law)", all, &report.join(" "));
    assert!(passed);
}

#[test]
fn criterion_4_dilation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0f32;
    let mut cases = 0;
    while cases < 200 {
        for k in [1usize, 3] {
            for d in [1usize, 2, 4] {
                let h = rng.gen_range(4..9);
                let w = rng.gen_range(4..9);
                let cin = rng.gen_range(1..4);
                let cout = rng.gen_range(1..4);
                let x = Tensor::new(
                    (1, h, w, cin),
                    (0..h * w * cin).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                let kernel = WeightTensor::new(
                    vec![k, k, cin, cout],
                    (0..k * k * cin * cout)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect(),
                );
                let nk = (k - 1) * d + 1;
                let mut dense = vec![0.0f32; nk * nk * cin * cout];
                for ky in 0..k {
                    for kx in 0..k {
                        for ic in 0..cin {
                            for oc in 0..cout {
                                dense[(((ky * d) * nk + kx * d) * cin + ic) * cout + oc] =
                                    kernel.data[((ky * k + kx) * cin + ic) * cout + oc];
                            }
                        }
                    }
                }
                let got = conv2d(&x, &kernel, 1, d).unwrap();
                let expected =
                    conv2d(&x, &WeightTensor::new(vec![nk, nk, cin, cout], dense), 1, 1).unwrap();
                for (a, b) in got.data().iter().zip(expected.data()) {
                    worst = worst.max((a - b).abs());
                }
                cases += 1;
            }
        }
    }
    let passed = status(
        "4 (dilation oracle)",
        worst <= 1e-5,
        &format!("{cases} random cases, max abs diff {worst:.2e} (bound 1e-5)"),
    );
    assert!(passed);
}

#[test]
fn criterion_5_separable_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0f32;
    for _ in 0..100 {
        let h = rng.gen_range(4..8);
        let w = rng.gen_range(4..8);
        let cin = rng.gen_range(1..5);
        let cout = rng.gen_range(1..5);
        let x = Tensor::new(
            (1, h, w, cin),
            (0..h * w * cin).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let dw = WeightTensor::new(
            vec![3, 3, cin, 1],
            (0..9 * cin).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let pw = WeightTensor::new(
            vec![1, 1, cin, cout],
            (0..cin * cout).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let separable = conv2d(&depthwise_conv2d(&x, &dw, 1, 1).unwrap(), &pw, 1, 1).unwrap();
        // block-diagonal dense kernel: taps couple channel ic only to outputs
        // through dw[ic] * pw[ic][oc]
        let mut dense = vec![0.0f32; 9 * cin * cout];
        for ky in 0..3 {
            for kx in 0..3 {
                for ic in 0..cin {
                    for oc in 0..cout {
                        dense[((ky * 3 + kx) * cin + ic) * cout + oc] =
                            dw.data[(ky * 3 + kx) * cin + ic] * pw.data[ic * cout + oc];
                    }
                }
            }
        }
        let expected = conv2d(&x, &WeightTensor::new(vec![3, 3, cin, cout], dense), 1, 1).unwrap();
        for (a, b) in separable.data().iter().zip(expected.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    let passed = status(
        "5 (separable oracle)",
        worst <= 1e-5,
        &format!("100 random cases, max abs diff {worst:.2e} (bound 1e-5)"),
    );
    assert!(passed);
}

#[test]
fn criterion_6_search_space_arithmetic() {
    let config = SearchConfig::default_config().unwrap();
    let size = search_space_size(&config);
    let exact = size.permutations.to_string() == "121645100408832000"
        && size.connections.to_string() == "2432902008176640000"
        && size.adjustments == BigUint::from(524_288u64)
        && size.dilations == BigUint::from(1_162_261_467u64);

    // exhaustive enumeration oracle on toy configs with total <= 1e6
    let mut enumerated_ok = true;
    let mut checked = Vec::new();
    for (levels, m, a, d) in [
        (vec![2u32, 3, 4], 2usize, 2usize, 3usize), // 31,104
        (vec![2, 3, 4, 5], 2, 2, 2),                // 737,280
        (vec![2, 3], 1, 1, 2),                      // 2! * (1*2) * 1 * 4 = 16
        (vec![4], 3, 2, 3),                         // 1 * 3 * 2 * 3 = 18
    ] {
        let toy = SearchConfig {
            level_multiset: levels,
            num_initial: m,
            adjustment_domain: vec![-1, 0][..a].to_vec(),
            dilation_domain: vec![1, 2, 4][..d].to_vec(),
            flop_budget: u64::MAX,
            input_hw: (128, 128),
            num_classes: 21,
            proxy: Default::default(),
        };
        let formula = search_space_size(&toy).total;
        let brute = BigUint::from(spineseg::verify::enumerate_space_count(&toy));
        assert!(formula <= BigUint::from(1_000_000u64));
        enumerated_ok &= formula == brute;
        checked.push(format!("{formula}"));
    }
    let passed = status(
        "6 (search-space arithmetic)",
        exact && enumerated_ok,
        &format!(
            "default: 19! / 20!/1! / 2^19 / 3^19 exact; enumerated totals {}",
            checked.join(", ")
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_7_block_table_round_trip() {
    let s49 = spinenet_s49_spec(21);
    let candidate = spec_to_candidate(&s49).unwrap();
    let config = SearchConfig::default_config().unwrap();
    let rebuilt = candidate_to_spec(&candidate, &config, 21).unwrap();
    let round_trip = rebuilt == s49;

    // dilation placement: each searched block's 3x3 conv carries its dilation
    let graph = build_graph(&s49, (256, 256), 21).unwrap();
    let mut placement_ok = true;
    let mut searched = 0;
    for block in s49.blocks.iter().filter(|b| b.id >= 2) {
        let dilated: Vec<usize> = graph
            .nodes
            .iter()
            .filter(|n| n.segment == Segment::Block(block.id))
            .filter(|n| match n.op {
                Op::Conv2d {
                    kernel: 3,
                    dilation,
                    ..
                } => dilation == block.dilation as usize,
                Op::DepthwiseConv2d {
                    kernel: 3,
                    dilation,
                    ..
                } => dilation == block.dilation as usize,
                _ => false,
            })
            .map(|n| n.id)
            .collect();
        // exactly one dilation-capable 3x3 conv per block core, excluding the
        // stride-2 downsample convs in resampling (those have dilation 1 and
        // would only collide when the block's dilation is also 1)
        let cores: Vec<usize> = graph
            .nodes
            .iter()
            .filter(|n| n.segment == Segment::Block(block.id))
            .filter(|n| {
                matches!(
                    n.op,
                    Op::Conv2d {
                        kernel: 3,
                        stride: 1,
                        ..
                    }
                ) || matches!(
                    n.op,
                    Op::DepthwiseConv2d {
                        kernel: 3,
                        stride: 1,
                        ..
                    }
                )
            })
            .map(|n| n.id)
            .collect();
        placement_ok &= cores.len() == 1 && dilated.contains(&cores[0]);
        searched += 1;
    }
    let passed = status(
        "7 (block-table round trip)",
        round_trip && placement_ok,
        &format!("round trip identity: {round_trip}; dilation placement over {searched} searched blocks: {placement_ok}"),
    );
    assert!(passed);
}

#[test]
fn criterion_8_feasibility_gate() {
    let config = SearchConfig::default_config().unwrap();

    // the baseline itself sits exactly at the boundary
    let baseline = resnet_s50_spec(config.num_classes);
    let graph = build_graph(&baseline, config.input_hw, config.num_classes as usize).unwrap();
    let baseline_flops = count_flops(&graph, config.input_hw).unwrap();
    let boundary = baseline_flops == config.flop_budget;

    // measure at a smaller equally-divisible input; feasibility ratios are
    // input-independent because every op scales with area
    let hw = (128, 128);
    let budget = {
        let g = build_graph(&baseline, hw, config.num_classes as usize).unwrap();
        count_flops(&g, hw).unwrap()
    };
    let mut feasible = 0usize;
    let (mut min, mut max, mut sum) = (u64::MAX, 0u64, 0u128);
    let total = 1000usize;
    for trial in 0..total {
        let candidate = sample_candidate_stream(808, trial as u64, &config);
        let spec = candidate_to_spec(&candidate, &config, config.num_classes).unwrap();
        let g = build_graph(&spec, hw, config.num_classes as usize).unwrap();
        let flops = count_flops(&g, hw).unwrap();
        min = min.min(flops);
        max = max.max(flops);
        sum += flops as u128;
        if flops <= budget {
            feasible += 1;
        }
    }
    let mean = (sum / total as u128) as u64;
    let passed = status(
        "8 (feasibility gate)",
        boundary && feasible == total,
        &format!(
            "baseline at boundary: {boundary}; {feasible}/{total} sampled candidates within budget \
             (candidate FLOPs at 128x128: min {:.2}B, mean {:.2}B, max {:.2}B vs budget {:.2}B)",
            min as f64 / 1e9,
            mean as f64 / 1e9,
            max as f64 / 1e9,
            budget as f64 / 1e9
        ),
    );
    assert!(
        passed,
        "boundary equality {boundary}; {feasible}/{total} candidates feasible — every candidate \
         carries an output-stride-8 ASPP/head while the budget baseline runs its head at stride 16"
    );
}

#[test]
fn criterion_9_forward_determinism() {
    let started = std::time::Instant::now();
    let spec = spinenet_s49_spec(21);
    let graph = build_graph(&spec, (128, 128), 21).unwrap();
    let weights = init_random_weights(&graph, 9);
    let input = {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        Tensor::new(
            (1, 128, 128, 3),
            (0..128 * 128 * 3)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    };
    let first = execute(&graph, &input, &weights).unwrap();
    let second = execute(&graph, &input, &weights).unwrap();

    // concurrent executions on the shared graph/weights must agree bytewise
    let (third, fourth) = std::thread::scope(|s| {
        let a = s.spawn(|| execute(&graph, &input, &weights).unwrap());
        let b = s.spawn(|| execute(&graph, &input, &weights).unwrap());
        (a.join().unwrap(), b.join().unwrap())
    });

    let bytes = |t: &Tensor| {
        let mut buf = Vec::new();
        write_tensor(&mut buf, t).unwrap();
        buf
    };
    let identical = bytes(&first) == bytes(&second)
        && bytes(&first) == bytes(&third)
        && bytes(&first) == bytes(&fourth);
    let elapsed = started.elapsed();
    let shape_ok = first.dims() == (1, 128, 128, 21);
    let passed = status(
        "9 (forward determinism)",
        identical && shape_ok && elapsed.as_secs() < 120,
        &format!(
            "output {:?}, 4 runs byte-identical: {identical}, total {:.1}s (bound 120s)",
            first.dims(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_full_graph_shape_runs() {
    let mut all = true;
    let mut report = Vec::new();
    let cases: Vec<(&str, ModelSpec, usize)> = vec![
        ("s49", spinenet_s49_spec(21), 256),
        ("s96", spinenet_s96_spec(21), 256),
        ("s143", spinenet_s143_spec(21), 256),
        ("s143plus", spinenet_s143plus_spec(19), 256),
        ("resnet-s50", resnet_s50_spec(21), 256),
        ("mobile-s49", mobile_spinenet_s49_spec(19), 128),
        ("mobile-s49minus", mobile_spinenet_s49minus_spec(19), 128),
    ];
    for (name, spec, size) in cases {
        let classes = spec.num_classes as usize;
        match build_graph(&spec, (size, size), classes)
            .and_then(|g| g.infer_shapes((size, size)).map(|s| (g, s)))
        {
            Ok((graph, shapes)) => {
                let out = shapes[graph.output_node()];
                let ok = out == (size, size, classes);
                all &= ok;
                report.push(format!("{name}:{}x{}x{}", out.0, out.1, out.2));
            }
            Err(e) => {
                all = false;
                report.push(format!("{name}:ERROR {e}"));
            }
        }
    }
    let passed = status("10 (full-graph shape runs)", all, &report.join(" "));
    assert!(passed);
}
