//! The joint architecture search space: scale permutation of the intermediate
//! blocks, one long-range connection per block, per-block level adjustments
//! and dilation ratios, plus exact search-space-size arithmetic, candidate
//! conversion, budget feasibility, and a seeded random-search driver with a
//! pluggable evaluator.

use std::io::Write as IoWrite;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_bigint::BigUint;
use num_traits::One;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::count_flops;
use crate::archspec::{
    resnet_s50_spec, BlockFamily, BlockKind, BlockSpec, ModelSpec, ASPP_RATES_THREE, HEAD_DIM,
};
use crate::error::SearchError;
use crate::graphbuilder::build_graph;

/// Proxy-task settings recorded with every search run so an external trainer
/// can reproduce the reduced-cost evaluation setup exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    pub filter_multiplier: f64,
    pub image_hw: (usize, usize),
    pub steps: u32,
    pub batch: u32,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            filter_multiplier: 0.5,
            image_hw: (384, 384),
            steps: 30_000,
            batch: 64,
        }
    }
}

/// Search-space definition plus the budget it is filtered against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Levels of the intermediate blocks to permute.
    pub level_multiset: Vec<u32>,
    /// Number of initial L2 blocks (m).
    pub num_initial: usize,
    pub adjustment_domain: Vec<i32>,
    pub dilation_domain: Vec<u32>,
    /// FLOP budget candidates are compared against.
    pub flop_budget: u64,
    /// Input size at which candidate FLOPs are measured.
    pub input_hw: (usize, usize),
    pub num_classes: u32,
    pub proxy: ProxyConfig,
}

/// Deep-stage allocation split over levels 5/6/7 (three blocks each), derived
/// from the learned block table.
pub fn staged_deep_level_multiset() -> Vec<u32> {
    let mut v = vec![2];
    v.extend([3; 3]);
    v.extend([4; 6]);
    v.extend([5; 3]);
    v.extend([6; 3]);
    v.extend([7; 3]);
    v
}

/// The literal flat allocation with all nine deep blocks at level 5.
pub fn flat_deep_level_multiset() -> Vec<u32> {
    let mut v = vec![2];
    v.extend([3; 3]);
    v.extend([4; 6]);
    v.extend([5; 9]);
    v
}

impl SearchConfig {
    /// Default space: the baseline allocation minus the two initial blocks and
    /// the reserved output block, with the budget set to the sequential
    /// baseline's FLOPs at 640x640 (21 classes).
    pub fn default_config() -> Result<Self, SearchError> {
        let input_hw = (640, 640);
        let num_classes = 21;
        let baseline = resnet_s50_spec(num_classes);
        let graph = build_graph(&baseline, input_hw, num_classes as usize)?;
        let flop_budget =
            count_flops(&graph, input_hw).map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
        Ok(SearchConfig {
            level_multiset: staged_deep_level_multiset(),
            num_initial: 2,
            adjustment_domain: vec![-1, 0],
            dilation_domain: vec![1, 2, 4],
            flop_budget,
            input_hw,
            num_classes,
            proxy: ProxyConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.num_initial < 1 {
            return Err(SearchError::InvalidConfig(
                "num_initial must be >= 1".into(),
            ));
        }
        if self.level_multiset.is_empty() {
            return Err(SearchError::InvalidConfig("level multiset is empty".into()));
        }
        if self.level_multiset.iter().any(|&l| !(1..=7).contains(&l)) {
            return Err(SearchError::InvalidConfig("levels must be in 1..=7".into()));
        }
        if self.adjustment_domain.is_empty() || self.dilation_domain.is_empty() {
            return Err(SearchError::InvalidConfig(
                "domains must be non-empty".into(),
            ));
        }
        if self.adjustment_domain.iter().any(|a| !matches!(a, -1 | 0)) {
            return Err(SearchError::InvalidConfig(
                "adjustments must come from {-1, 0}".into(),
            ));
        }
        if self.dilation_domain.iter().any(|d| !matches!(d, 1 | 2 | 4)) {
            return Err(SearchError::InvalidConfig(
                "dilations must come from {1, 2, 4}".into(),
            ));
        }
        Ok(())
    }

    pub fn num_permuted(&self) -> usize {
        self.level_multiset.len()
    }
}

/// One search-space point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Block levels in searched order.
    pub permutation: Vec<u32>,
    /// Global predecessor index per intermediate block.
    pub long_range: Vec<usize>,
    pub adjustments: Vec<i32>,
    pub dilations: Vec<u32>,
    /// Cross-scale connection of the output block.
    pub output_connection: usize,
    pub output_dilation: u32,
}

/// Exact component sizes of the search space.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpaceSize {
    /// N! orderings of the intermediate blocks.
    pub permutations: BigUint,
    /// prod_{i=m}^{N+m-1} i one-connection choices.
    pub connections: BigUint,
    /// The unsimplified two-connections-per-block product prod C(i, 2).
    pub connections_unsimplified: BigUint,
    /// a^N level adjustments.
    pub adjustments: BigUint,
    /// d^N dilation ratios.
    pub dilations: BigUint,
    /// Product of permutations, connections, adjustments, dilations.
    pub total: BigUint,
}

/// Evaluates the four component-size formulas as exact big integers.
pub fn search_space_size(config: &SearchConfig) -> SearchSpaceSize {
    let n = config.num_permuted() as u64;
    let m = config.num_initial as u64;
    let a = config.adjustment_domain.len() as u64;
    let d = config.dilation_domain.len() as u64;

    let mut permutations = BigUint::one();
    for i in 1..=n {
        permutations *= i;
    }
    let mut connections = BigUint::one();
    let mut connections_unsimplified = BigUint::one();
    for i in m..m + n {
        connections *= i;
        connections_unsimplified *= i * i.saturating_sub(1) / 2;
    }
    let adjustments = BigUint::from(a).pow(n as u32);
    let dilations = BigUint::from(d).pow(n as u32);
    let total = &permutations * &connections * &adjustments * &dilations;
    SearchSpaceSize {
        permutations,
        connections,
        connections_unsimplified,
        adjustments,
        dilations,
        total,
    }
}

fn sample_with_rng(rng: &mut ChaCha8Rng, config: &SearchConfig) -> Candidate {
    let n = config.num_permuted();
    let m = config.num_initial;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let permutation: Vec<u32> = order.iter().map(|&i| config.level_multiset[i]).collect();
    let mut long_range = Vec::with_capacity(n);
    let mut adjustments = Vec::with_capacity(n);
    let mut dilations = Vec::with_capacity(n);
    for (p, &level) in permutation.iter().enumerate() {
        long_range.push(rng.gen_range(0..p + m));
        let adj = *config
            .adjustment_domain
            .choose(rng)
            .expect("non-empty domain");
        // adjustments that would push a block below L1 are redrawn as 0
        adjustments.push(if level as i32 + adj < 1 { 0 } else { adj });
        dilations.push(
            *config
                .dilation_domain
                .choose(rng)
                .expect("non-empty domain"),
        );
    }
    let output_connection = rng.gen_range(0..n + m);
    let output_dilation = *config
        .dilation_domain
        .choose(rng)
        .expect("non-empty domain");
    Candidate {
        permutation,
        long_range,
        adjustments,
        dilations,
        output_connection,
        output_dilation,
    }
}

/// Uniform independent draws per component; deterministic for a given seed.
pub fn sample_candidate(rng_seed: u64, config: &SearchConfig) -> Candidate {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_with_rng(&mut rng, config)
}

/// Per-trial sampling stream derived from (seed, trial) so worker scheduling
/// cannot perturb results.
pub fn sample_candidate_stream(seed: u64, trial: u64, config: &SearchConfig) -> Candidate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_add(1));
    sample_with_rng(&mut rng, config)
}

/// Checks a candidate against its config.
pub fn validate_candidate(candidate: &Candidate, config: &SearchConfig) -> Result<(), SearchError> {
    let n = config.num_permuted();
    let m = config.num_initial;
    let err = |msg: String| Err(SearchError::InvalidCandidate(msg));
    if candidate.permutation.len() != n
        || candidate.long_range.len() != n
        || candidate.adjustments.len() != n
        || candidate.dilations.len() != n
    {
        return err(format!("component lengths must all be {n}"));
    }
    let mut sorted = candidate.permutation.clone();
    sorted.sort_unstable();
    let mut expected = config.level_multiset.clone();
    expected.sort_unstable();
    if sorted != expected {
        return err("permutation is not an ordering of the level multiset".into());
    }
    for (p, &source) in candidate.long_range.iter().enumerate() {
        if source >= p + m {
            return err(format!(
                "long_range {source} at position {p} must be < {}",
                p + m
            ));
        }
    }
    for (p, (&level, &adj)) in candidate
        .permutation
        .iter()
        .zip(&candidate.adjustments)
        .enumerate()
    {
        if !config.adjustment_domain.contains(&adj) && adj != 0 {
            return err(format!("adjustment {adj} at position {p} outside domain"));
        }
        if level as i32 + adj < 1 {
            return err(format!("adjusted level below L1 at position {p}"));
        }
    }
    for (p, d) in candidate.dilations.iter().enumerate() {
        if !config.dilation_domain.contains(d) {
            return err(format!("dilation {d} at position {p} outside domain"));
        }
    }
    if candidate.output_connection >= n + m {
        return err(format!(
            "output connection {} out of range",
            candidate.output_connection
        ));
    }
    if !config.dilation_domain.contains(&candidate.output_dilation) {
        return err("output dilation outside domain".into());
    }
    Ok(())
}

/// Converts a candidate into a bottleneck-family model spec: m initial L2
/// blocks, the permuted intermediates with adjacent + long-range edges, and an
/// L3 (output-stride 8) output block carrying the searched connection. A
/// long-range choice equal to the adjacent block is stored as `none`.
pub fn candidate_to_spec(
    candidate: &Candidate,
    config: &SearchConfig,
    num_classes: u32,
) -> Result<ModelSpec, SearchError> {
    validate_candidate(candidate, config)?;
    let family = BlockFamily::Bottleneck;
    let m = config.num_initial;
    let n = config.num_permuted();
    let mut blocks = Vec::with_capacity(m + n + 1);
    for id in 0..m {
        blocks.push(BlockSpec {
            id,
            level: 2,
            long_range: None,
            adjustment: 0,
            dilation: 1,
            feature_dim: family.level_dim(2),
            kind: BlockKind::Initial,
            repeats: 1,
        });
    }
    for p in 0..n {
        let id = m + p;
        let level = candidate.permutation[p];
        let adjustment = candidate.adjustments[p];
        let final_level = (level as i32 + adjustment) as u32;
        blocks.push(BlockSpec {
            id,
            level,
            long_range: Some(candidate.long_range[p]).filter(|&s| s != id - 1),
            adjustment,
            dilation: candidate.dilations[p],
            feature_dim: family.level_dim(final_level),
            kind: BlockKind::Intermediate,
            repeats: 1,
        });
    }
    let id = m + n;
    blocks.push(BlockSpec {
        id,
        level: 3,
        long_range: Some(candidate.output_connection).filter(|&s| s != id - 1),
        adjustment: 0,
        dilation: candidate.output_dilation,
        feature_dim: family.level_dim(3),
        kind: BlockKind::Output,
        repeats: 1,
    });
    Ok(ModelSpec {
        family,
        expansion: family.expansion(),
        filter_multiplier: 1.0,
        output_stride: 8,
        aspp_rates: ASPP_RATES_THREE.to_vec(),
        head_convs_n: 0,
        head_dim: HEAD_DIM,
        num_classes,
        blocks,
    })
}

/// Encodes a spec of the search-space shape back into a candidate.
pub fn spec_to_candidate(spec: &ModelSpec) -> Result<Candidate, SearchError> {
    let m = spec
        .blocks
        .iter()
        .filter(|b| b.kind == BlockKind::Initial)
        .count();
    let output = spec
        .blocks
        .last()
        .filter(|b| b.kind == BlockKind::Output)
        .ok_or_else(|| SearchError::InvalidCandidate("spec has no trailing output block".into()))?;
    let intermediates: Vec<&BlockSpec> = spec
        .blocks
        .iter()
        .filter(|b| b.kind == BlockKind::Intermediate)
        .collect();
    Ok(Candidate {
        permutation: intermediates.iter().map(|b| b.level).collect(),
        long_range: intermediates
            .iter()
            .map(|b| b.long_range.unwrap_or(b.id - 1))
            .collect(),
        adjustments: intermediates.iter().map(|b| b.adjustment).collect(),
        dilations: intermediates.iter().map(|b| b.dilation).collect(),
        output_connection: output.long_range.unwrap_or(output.id - 1),
        output_dilation: output.dilation,
    })
    .and_then(|c| {
        if m == 0 {
            Err(SearchError::InvalidCandidate(
                "spec has no initial blocks".into(),
            ))
        } else {
            Ok(c)
        }
    })
}

/// True iff the spec's FLOPs at `input_hw` stay within the config's budget.
pub fn is_feasible(
    spec: &ModelSpec,
    config: &SearchConfig,
    input_hw: (usize, usize),
) -> Result<bool, SearchError> {
    let graph = build_graph(spec, input_hw, spec.num_classes as usize)?;
    let flops =
        count_flops(&graph, input_hw).map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
    Ok(flops <= config.flop_budget)
}

/// Maps a candidate spec to a scalar reward. Implementations must tolerate
/// concurrent invocations.
pub trait Evaluator: Sync {
    fn evaluate(&self, spec: &ModelSpec) -> Result<f64, String>;
    fn describe(&self) -> String;
}

/// Cost-based stub evaluator: reward = -FLOPs at the configured input size.
pub struct NegativeFlopsEvaluator {
    pub input_hw: (usize, usize),
}

impl Evaluator for NegativeFlopsEvaluator {
    fn evaluate(&self, spec: &ModelSpec) -> Result<f64, String> {
        let graph = build_graph(spec, self.input_hw, spec.num_classes as usize)
            .map_err(|e| e.to_string())?;
        let flops = count_flops(&graph, self.input_hw).map_err(|e| e.to_string())?;
        Ok(-(flops as f64))
    }

    fn describe(&self) -> String {
        format!("negative-flops@{}x{}", self.input_hw.0, self.input_hw.1)
    }
}

/// External-command evaluator: spec JSON on stdin, one decimal reward on
/// stdout, nonzero exit = failure.
pub struct CommandEvaluator {
    pub program: String,
}

impl Evaluator for CommandEvaluator {
    fn evaluate(&self, spec: &ModelSpec) -> Result<f64, String> {
        use std::process::{Command, Stdio};
        let mut child = Command::new(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("spawn {}: {e}", self.program))?;
        let payload = crate::archspec::serialize_spec(spec);
        child
            .stdin
            .take()
            .ok_or("no stdin")?
            .write_all(payload.as_bytes())
            .map_err(|e| e.to_string())?;
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("evaluator exited with {}", out.status));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        text.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad reward '{}': {e}", text.trim()))
    }

    fn describe(&self) -> String {
        format!("cmd:{}", self.program)
    }
}

/// Everything recorded for one trial; serialized as one JSON log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub candidate: Candidate,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A ranked feasible candidate.
#[derive(Debug, Clone, Serialize)]
pub struct RankedCandidate {
    pub rank: usize,
    pub trial: usize,
    pub reward: f64,
    pub candidate: Candidate,
}

/// Complete random-search outcome.
#[derive(Debug)]
pub struct SearchRun {
    pub records: Vec<TrialRecord>,
    pub ranked: Vec<RankedCandidate>,
    pub feasible: usize,
    pub infeasible: usize,
    pub errors: usize,
}

/// Samples one candidate per trial, skips (and counts) infeasible ones,
/// evaluates the rest, and ranks by reward descending with ties broken by
/// trial index. Identical seed/config/evaluator give identical output for any
/// worker count: per-trial RNG streams derive from (seed, trial).
pub fn random_search(
    config: &SearchConfig,
    trials: usize,
    evaluator: &dyn Evaluator,
    workers: usize,
    seed: u64,
) -> Result<SearchRun, SearchError> {
    if trials == 0 {
        return Err(SearchError::NoTrials);
    }
    config.validate()?;
    let workers = workers.max(1).min(trials);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TrialRecord>>> = Mutex::new(vec![None; trials]);

    let run_trial = |trial: usize| -> TrialRecord {
        let candidate = sample_candidate_stream(seed, trial as u64, config);
        let spec = match candidate_to_spec(&candidate, config, config.num_classes) {
            Ok(spec) => spec,
            Err(e) => {
                return TrialRecord {
                    trial,
                    seed,
                    candidate,
                    feasible: false,
                    reward: None,
                    error: Some(e.to_string()),
                }
            }
        };
        match is_feasible(&spec, config, config.input_hw) {
            Ok(true) => match evaluator.evaluate(&spec) {
                Ok(reward) if reward.is_finite() => TrialRecord {
                    trial,
                    seed,
                    candidate,
                    feasible: true,
                    reward: Some(reward),
                    error: None,
                },
                Ok(reward) => TrialRecord {
                    trial,
                    seed,
                    candidate,
                    feasible: true,
                    reward: None,
                    error: Some(format!("non-finite reward {reward}")),
                },
                Err(e) => TrialRecord {
                    trial,
                    seed,
                    candidate,
                    feasible: true,
                    reward: None,
                    error: Some(e),
                },
            },
            Ok(false) => TrialRecord {
                trial,
                seed,
                candidate,
                feasible: false,
                reward: None,
                error: None,
            },
            Err(e) => TrialRecord {
                trial,
                seed,
                candidate,
                feasible: false,
                reward: None,
                error: Some(e.to_string()),
            },
        }
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let trial = next.fetch_add(1, Ordering::Relaxed);
                if trial >= trials {
                    break;
                }
                let record = run_trial(trial);
                slots.lock().expect("slots lock")[trial] = Some(record);
            });
        }
    });

    let records: Vec<TrialRecord> = slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .map(|r| r.expect("every trial ran"))
        .collect();

    let feasible = records.iter().filter(|r| r.feasible).count();
    let infeasible = records
        .iter()
        .filter(|r| !r.feasible && r.error.is_none())
        .count();
    let errors = records.iter().filter(|r| r.error.is_some()).count();

    let mut scored: Vec<(usize, f64, Candidate)> = records
        .iter()
        .filter_map(|r| {
            r.reward
                .map(|reward| (r.trial, reward, r.candidate.clone()))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let ranked = scored
        .into_iter()
        .enumerate()
        .map(|(rank, (trial, reward, candidate))| RankedCandidate {
            rank,
            trial,
            reward,
            candidate,
        })
        .collect();

    Ok(SearchRun {
        records,
        ranked,
        feasible,
        infeasible,
        errors,
    })
}

/// Writes the per-trial JSONL log.
pub fn write_trial_log(w: &mut impl IoWrite, records: &[TrialRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut *w, record)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Final report with the top-k candidates and the proxy-task provenance block.
pub fn report_json(
    run: &SearchRun,
    config: &SearchConfig,
    evaluator_desc: &str,
    seed: u64,
    top_k: usize,
) -> serde_json::Value {
    let size = search_space_size(config);
    serde_json::json!({
        "seed": seed,
        "evaluator": evaluator_desc,
        "trials": run.records.len(),
        "feasible": run.feasible,
        "infeasible": run.infeasible,
        "errors": run.errors,
        "flop_budget": config.flop_budget,
        "budget_input_hw": [config.input_hw.0, config.input_hw.1],
        "search_space": {
            "permutations": size.permutations.to_string(),
            "connections": size.connections.to_string(),
            "adjustments": size.adjustments.to_string(),
            "dilations": size.dilations.to_string(),
            "total": size.total.to_string(),
        },
        "top": run.ranked.iter().take(top_k).collect::<Vec<_>>(),
        "proxy": config.proxy,
        "config": {
            "level_multiset": config.level_multiset,
            "num_initial": config.num_initial,
            "adjustment_domain": config.adjustment_domain,
            "dilation_domain": config.dilation_domain,
            "num_classes": config.num_classes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspec::{spinenet_s49_spec, validate_spec};

    fn toy_config(levels: Vec<u32>, m: usize) -> SearchConfig {
        SearchConfig {
            level_multiset: levels,
            num_initial: m,
            adjustment_domain: vec![-1, 0],
            dilation_domain: vec![1, 2, 4],
            flop_budget: u64::MAX,
            input_hw: (128, 128),
            num_classes: 5,
            proxy: ProxyConfig::default(),
        }
    }

    #[test]
    fn space_size_small_config() {
        let mut config = toy_config(vec![2, 3, 4], 2);
        config.adjustment_domain = vec![-1, 0];
        config.dilation_domain = vec![1, 2, 4];
        let size = search_space_size(&config);
        assert_eq!(size.permutations, BigUint::from(6u32));
        assert_eq!(size.connections, BigUint::from(24u32)); // 2*3*4
        assert_eq!(size.adjustments, BigUint::from(8u32));
        assert_eq!(size.dilations, BigUint::from(27u32));
        assert_eq!(size.total, BigUint::from(31104u32));
    }

    #[test]
    fn space_size_degenerate() {
        let config = toy_config(vec![4], 3);
        let size = search_space_size(&config);
        assert_eq!(size.permutations, BigUint::one());
        assert_eq!(size.connections, BigUint::from(3u32));
    }

    #[test]
    fn default_space_sizes_are_exact() {
        let config = SearchConfig::default_config().unwrap();
        assert_eq!(config.num_permuted(), 19);
        let size = search_space_size(&config);
        assert_eq!(size.permutations.to_string(), "121645100408832000"); // 19!
        assert_eq!(size.connections.to_string(), "2432902008176640000"); // 20!/1!
        assert_eq!(size.adjustments, BigUint::from(524_288u64)); // 2^19
        assert_eq!(size.dilations, BigUint::from(1_162_261_467u64)); // 3^19
                                                                     // the simplified one-connection product relates to the two-connection
                                                                     // product by prod C(i,2) = prod i * prod (i-1) / 2^N
        let mut check = BigUint::one();
        for i in 2u64..21 {
            check *= i * (i - 1) / 2;
        }
        assert_eq!(size.connections_unsimplified, check);
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let config = SearchConfig::default_config().unwrap();
        let a = sample_candidate(7, &config);
        let b = sample_candidate(7, &config);
        assert_eq!(a, b);
        let c = sample_candidate(8, &config);
        assert_ne!(a, c);
        for seed in 0..200 {
            let cand = sample_candidate(seed, &config);
            validate_candidate(&cand, &config).unwrap();
            for (p, &src) in cand.long_range.iter().enumerate() {
                assert!(src < p + config.num_initial);
            }
        }
    }

    #[test]
    fn permutation_frequencies_are_uniform() {
        let config = toy_config(vec![2, 3, 4], 2);
        let mut counts = std::collections::HashMap::new();
        let n = 10_000;
        for seed in 0..n {
            let cand = sample_candidate(seed, &config);
            *counts.entry(cand.permutation.clone()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let expected = n as f64 * p;
        for &count in counts.values() {
            assert!(
                (count as f64 - expected).abs() <= 3.0 * sigma,
                "count {count}"
            );
        }
    }

    #[test]
    fn below_l1_adjustments_are_redrawn() {
        let config = toy_config(vec![1, 1, 2], 1);
        for seed in 0..100 {
            let cand = sample_candidate(seed, &config);
            for (level, adj) in cand.permutation.iter().zip(&cand.adjustments) {
                assert!(*level as i32 + adj >= 1);
            }
        }
        // conversion rejects a raw below-L1 candidate
        let mut cand = sample_candidate(0, &config);
        let pos = cand.permutation.iter().position(|&l| l == 1).unwrap();
        cand.adjustments[pos] = -1;
        assert!(matches!(
            candidate_to_spec(&cand, &config, 5),
            Err(SearchError::InvalidCandidate(_))
        ));
    }

    #[test]
    fn learned_table_round_trips() {
        let s49 = spinenet_s49_spec(21);
        let candidate = spec_to_candidate(&s49).unwrap();
        let config = SearchConfig::default_config().unwrap();
        validate_candidate(&candidate, &config).unwrap();
        let rebuilt = candidate_to_spec(&candidate, &config, 21).unwrap();
        assert_eq!(rebuilt, s49);
    }

    #[test]
    fn identity_candidate_is_sequential_baseline_shape() {
        let config = toy_config(vec![2, 3, 4], 2);
        let candidate = Candidate {
            permutation: vec![2, 3, 4],
            long_range: vec![1, 2, 3], // each block's adjacent predecessor
            adjustments: vec![0, 0, 0],
            dilations: vec![1, 1, 1],
            output_connection: 4,
            output_dilation: 1,
        };
        let spec = candidate_to_spec(&candidate, &config, 5).unwrap();
        assert!(spec.blocks.iter().all(|b| b.long_range.is_none()));
        assert_eq!(validate_spec(&spec), vec![]);
        let levels: Vec<u32> = spec.blocks.iter().map(|b| b.level).collect();
        assert_eq!(levels, vec![2, 2, 2, 3, 4, 3]);
    }

    #[test]
    fn candidate_levels_match_multiset() {
        let config = SearchConfig::default_config().unwrap();
        for seed in 0..20 {
            let cand = sample_candidate(seed, &config);
            let spec = candidate_to_spec(&cand, &config, 21).unwrap();
            let mut levels: Vec<u32> = spec
                .blocks
                .iter()
                .filter(|b| b.kind == BlockKind::Intermediate)
                .map(|b| b.level)
                .collect();
            levels.sort_unstable();
            let mut expected = config.level_multiset.clone();
            expected.sort_unstable();
            assert_eq!(levels, expected);
        }
    }

    #[test]
    fn baseline_sits_on_the_budget_boundary() {
        let config = SearchConfig::default_config().unwrap();
        let baseline = resnet_s50_spec(config.num_classes);
        assert!(is_feasible(&baseline, &config, config.input_hw).unwrap());
        let graph = build_graph(&baseline, config.input_hw, config.num_classes as usize).unwrap();
        assert_eq!(
            count_flops(&graph, config.input_hw).unwrap(),
            config.flop_budget
        );
    }

    #[test]
    fn dilation_changes_no_flops_but_width_scaling_does() {
        let config = SearchConfig::default_config().unwrap();
        let mut dilated = resnet_s50_spec(config.num_classes);
        for b in &mut dilated.blocks {
            if b.kind != BlockKind::Initial {
                b.dilation = 4;
            }
        }
        assert!(is_feasible(&dilated, &config, config.input_hw).unwrap());
        let doubled =
            crate::archspec::scale_spec(&resnet_s50_spec(config.num_classes), 1, 2.0).unwrap();
        assert!(!is_feasible(&doubled, &config, config.input_hw).unwrap());
    }

    #[test]
    fn random_search_ranks_by_reward() {
        let config = toy_config(vec![2, 3, 4], 2);
        let evaluator = NegativeFlopsEvaluator {
            input_hw: (128, 128),
        };
        let run = random_search(&config, 50, &evaluator, 1, 11).unwrap();
        assert_eq!(run.records.len(), 50);
        assert_eq!(run.feasible, 50);
        // the top candidate has minimal FLOPs among all sampled candidates
        let mut best = f64::NEG_INFINITY;
        for record in &run.records {
            if let Some(r) = record.reward {
                best = best.max(r);
            }
        }
        assert_eq!(run.ranked[0].reward, best);
        for pair in run.ranked.windows(2) {
            assert!(pair[0].reward >= pair[1].reward);
        }
    }

    #[test]
    fn ranked_candidates_all_respect_the_budget() {
        let mut config = toy_config(vec![2, 3, 4], 2);
        // place the budget strictly inside the sampled cost range
        let mut costs: Vec<u64> = (0..30u64)
            .map(|t| {
                let cand = sample_candidate_stream(21, t, &config);
                let spec = candidate_to_spec(&cand, &config, config.num_classes).unwrap();
                let graph =
                    build_graph(&spec, config.input_hw, config.num_classes as usize).unwrap();
                count_flops(&graph, config.input_hw).unwrap()
            })
            .collect();
        costs.sort_unstable();
        config.flop_budget = costs[costs.len() / 2];
        let evaluator = NegativeFlopsEvaluator {
            input_hw: config.input_hw,
        };
        let run = random_search(&config, 30, &evaluator, 2, 21).unwrap();
        assert!(run.infeasible > 0);
        assert!(run.feasible > 0);
        assert_eq!(run.ranked.len(), run.feasible);
        for entry in &run.ranked {
            let spec = candidate_to_spec(&entry.candidate, &config, config.num_classes).unwrap();
            assert!(is_feasible(&spec, &config, config.input_hw).unwrap());
        }
    }

    #[test]
    fn single_trial_run() {
        let config = toy_config(vec![2, 3], 2);
        let evaluator = NegativeFlopsEvaluator {
            input_hw: (128, 128),
        };
        let run = random_search(&config, 1, &evaluator, 1, 3).unwrap();
        assert_eq!(run.ranked.len(), 1);
        assert!(random_search(&config, 0, &evaluator, 1, 3).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let config = toy_config(vec![2, 3, 4, 5], 2);
        let evaluator = NegativeFlopsEvaluator {
            input_hw: (128, 128),
        };
        let a = random_search(&config, 24, &evaluator, 1, 9).unwrap();
        let b = random_search(&config, 24, &evaluator, 8, 9).unwrap();
        let key = |run: &SearchRun| {
            run.ranked
                .iter()
                .map(|r| (r.trial, r.reward.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b));
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.candidate, rb.candidate);
        }
    }

    #[test]
    fn evaluator_failures_are_recorded_not_fatal() {
        struct Flaky;
        impl Evaluator for Flaky {
            fn evaluate(&self, spec: &ModelSpec) -> Result<f64, String> {
                if spec.blocks[2].dilation == 1 {
                    Err("synthetic failure".into())
                } else {
                    Ok(1.0)
                }
            }
            fn describe(&self) -> String {
                "flaky".into()
            }
        }
        let config = toy_config(vec![2, 3, 4], 2);
        let run = random_search(&config, 30, &Flaky, 2, 5).unwrap();
        assert!(run.errors > 0, "expected some synthetic failures");
        assert!(run.ranked.iter().all(|r| r.reward == 1.0));
        assert_eq!(run.records.len(), 30);
    }

    #[test]
    fn trial_log_is_one_json_line_per_trial() {
        let config = toy_config(vec![2, 3], 2);
        let evaluator = NegativeFlopsEvaluator {
            input_hw: (128, 128),
        };
        let run = random_search(&config, 10, &evaluator, 2, 1).unwrap();
        let mut buf = Vec::new();
        write_trial_log(&mut buf, &run.records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        for line in lines {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("trial").is_some());
            assert!(v.get("candidate").is_some());
            assert!(v.get("feasible").is_some());
        }
        let report = report_json(&run, &config, "negative-flops", 1, 5);
        assert_eq!(report["proxy"]["filter_multiplier"], 0.5);
        assert_eq!(report["proxy"]["image_hw"][0], 384);
        assert_eq!(report["proxy"]["steps"], 30000);
        assert_eq!(report["proxy"]["batch"], 64);
    }
}
