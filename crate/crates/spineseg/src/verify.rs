//! Embedded self-checks: a fast invariant suite runnable from the CLI
//! (dilation oracle, shape laws, search-space enumeration, block-table
//! round-trip). Each check is independent of the code path it validates.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::output_stride_of;
use crate::archspec::{resnet_s50_spec, set_output_stride, spinenet_s49_spec};
use crate::graphbuilder::build_graph;
use crate::search::{
    candidate_to_spec, search_space_size, spec_to_candidate, ProxyConfig, SearchConfig,
};
use crate::tensorops::{conv2d, Tensor, WeightTensor};

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Counts the search space by literally enumerating every assignment
/// (permutation x per-block connection/adjustment/dilation). Only usable for
/// small configs; this is the oracle for the closed-form size arithmetic.
pub fn enumerate_space_count(config: &SearchConfig) -> u64 {
    let n = config.num_permuted();
    let m = config.num_initial;
    let a = config.adjustment_domain.len();
    let d = config.dilation_domain.len();

    fn per_block_choices(p: usize, n: usize, m: usize, a: usize, d: usize, count: &mut u64) {
        if p == n {
            *count += 1;
            return;
        }
        for _connection in 0..p + m {
            for _adj in 0..a {
                for _dil in 0..d {
                    per_block_choices(p + 1, n, m, a, d, count);
                }
            }
        }
    }

    // Heap's algorithm over the block indices
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stack = vec![0usize; n];
    let mut count = 0u64;
    per_block_choices(0, n, m, a, d, &mut count);
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                indices.swap(0, i);
            } else {
                indices.swap(stack[i], i);
            }
            per_block_choices(0, n, m, a, d, &mut count);
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    count
}

fn toy_config(levels: Vec<u32>, m: usize, a: usize, d: usize) -> SearchConfig {
    SearchConfig {
        level_multiset: levels,
        num_initial: m,
        adjustment_domain: vec![-1, 0][..a].to_vec(),
        dilation_domain: vec![1, 2, 4][..d].to_vec(),
        flop_budget: u64::MAX,
        input_hw: (128, 128),
        num_classes: 21,
        proxy: ProxyConfig::default(),
    }
}

fn check_dilation_oracle() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0f32;
    for k in [1usize, 3] {
        for d in [1usize, 2, 4] {
            for _ in 0..4 {
                let data: Vec<f32> = (0..8 * 8 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x = Tensor::new((1, 8, 8, 2), data).unwrap();
                let klen = k * k * 2 * 3;
                let kernel = WeightTensor::new(
                    vec![k, k, 2, 3],
                    (0..klen).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                );
                // zero-inserted dense kernel
                let nk = (k - 1) * d + 1;
                let mut dense = vec![0.0; nk * nk * 2 * 3];
                for ky in 0..k {
                    for kx in 0..k {
                        for ic in 0..2 {
                            for oc in 0..3 {
                                dense[(((ky * d) * nk + kx * d) * 2 + ic) * 3 + oc] =
                                    kernel.data[((ky * k + kx) * 2 + ic) * 3 + oc];
                            }
                        }
                    }
                }
                let dilated = conv2d(&x, &kernel, 1, d).unwrap();
                let reference =
                    conv2d(&x, &WeightTensor::new(vec![nk, nk, 2, 3], dense), 1, 1).unwrap();
                for (a, b) in dilated.data().iter().zip(reference.data()) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    CheckResult {
        name: "dilation zero-insertion oracle",
        passed: worst <= 1e-5,
        detail: format!("max abs diff {worst:.2e} (bound 1e-5)"),
    }
}

fn check_shape_laws() -> CheckResult {
    let cases: Vec<(String, usize)> = vec![
        ("s49 default".into(), 8),
        ("s49 at output stride 4".into(), 4),
        ("resnet-s50 baseline".into(), 16),
    ];
    let mut failures = Vec::new();
    for (name, expected) in &cases {
        let spec = match expected {
            4 => set_output_stride(&spinenet_s49_spec(21), 4).unwrap(),
            16 => resnet_s50_spec(21),
            _ => spinenet_s49_spec(21),
        };
        match build_graph(&spec, (256, 256), 21).and_then(|g| {
            let os = output_stride_of(&g)
                .map_err(|e| crate::error::BuildError::Invariant(e.to_string()))?;
            let shapes = g.infer_shapes((256, 256))?;
            Ok((os, shapes[g.output_node()]))
        }) {
            Ok((os, out)) => {
                if os != *expected || out != (256, 256, 21) {
                    failures.push(format!("{name}: stride {os}, output {out:?}"));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    CheckResult {
        name: "output-stride shape law",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "strides 8/4/16 verified at 256x256".into()
        } else {
            failures.join("; ")
        },
    }
}

fn check_enumeration() -> CheckResult {
    let mut failures = Vec::new();
    for (levels, m, a, d) in [
        (vec![2u32, 3, 4], 2, 2, 3),
        (vec![2, 3], 1, 1, 2),
        (vec![2, 3, 4, 5], 2, 2, 2),
    ] {
        let config = toy_config(levels, m, a, d);
        let size = search_space_size(&config);
        let enumerated = BigUint::from(enumerate_space_count(&config));
        if size.total != enumerated {
            failures.push(format!(
                "formula {} vs enumerated {}",
                size.total, enumerated
            ));
        }
    }
    CheckResult {
        name: "search-space enumeration",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "closed forms match exhaustive enumeration".into()
        } else {
            failures.join("; ")
        },
    }
}

fn check_block_table_round_trip() -> CheckResult {
    let s49 = spinenet_s49_spec(21);
    let result = spec_to_candidate(&s49).and_then(|cand| {
        let config = SearchConfig {
            level_multiset: crate::search::staged_deep_level_multiset(),
            num_initial: 2,
            adjustment_domain: vec![-1, 0],
            dilation_domain: vec![1, 2, 4],
            flop_budget: u64::MAX,
            input_hw: (640, 640),
            num_classes: 21,
            proxy: ProxyConfig::default(),
        };
        candidate_to_spec(&cand, &config, 21)
    });
    match result {
        Ok(rebuilt) if rebuilt == s49 => CheckResult {
            name: "block-table round trip",
            passed: true,
            detail: "spec -> candidate -> spec is the identity".into(),
        },
        Ok(_) => CheckResult {
            name: "block-table round trip",
            passed: false,
            detail: "rebuilt spec differs from the block table".into(),
        },
        Err(e) => CheckResult {
            name: "block-table round trip",
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Runs the whole embedded suite.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_dilation_oracle(),
        check_shape_laws(),
        check_enumeration(),
        check_block_table_round_trip(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_embedded_checks_pass() {
        for check in run_all() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }

    #[test]
    fn enumeration_counts_tiny_space() {
        // N=2, m=1, a=1, d=1: 2! * (1*2) * 1 * 1 = 4
        let config = toy_config(vec![2, 3], 1, 1, 1);
        assert_eq!(enumerate_space_count(&config), 4);
    }
}
