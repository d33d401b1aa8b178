//! `spineseg` — build, analyze, run, export, and search scale-permuted
//! segmentation networks from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spineseg::analysis::{stats_for_graph, ModelStats};
use spineseg::archspec::{
    mobile_spinenet_s49_spec, mobile_spinenet_s49minus_spec, parse_spec, resnet_s50_spec,
    serialize_spec, set_output_stride, spinenet_s143_spec, spinenet_s143plus_spec,
    spinenet_s49_spec, spinenet_s96_spec, validate_spec, ModelSpec,
};
use spineseg::graphbuilder::{build_graph, export_dot, summary_json};
use spineseg::search::{
    random_search, report_json, write_trial_log, CommandEvaluator, Evaluator,
    NegativeFlopsEvaluator, SearchConfig,
};
use spineseg::tensorops::{
    execute, init_random_weights, read_tensor, read_weights, write_tensor, Tensor,
};

#[derive(Parser)]
#[command(
    name = "spineseg",
    version,
    about = "Scale-permuted segmentation network toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a normalized architecture spec for a named model or a spec file.
    Build(BuildArgs),
    /// Report parameters, FLOPs, output stride, and receptive field.
    Stats(StatsArgs),
    /// Run a forward pass over a tensor file.
    Infer(InferArgs),
    /// Export a lowered graph as DOT or JSON.
    Export(ExportArgs),
    /// Run budget-filtered random architecture search.
    Search(SearchArgs),
    /// Run the embedded invariant checklist.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelName {
    S49,
    S96,
    S143,
    S143plus,
    MobileS49,
    MobileS49minus,
    ResnetS50,
}

impl ModelName {
    fn build(self, classes: u32) -> ModelSpec {
        match self {
            ModelName::S49 => spinenet_s49_spec(classes),
            ModelName::S96 => spinenet_s96_spec(classes),
            ModelName::S143 => spinenet_s143_spec(classes),
            ModelName::S143plus => spinenet_s143plus_spec(classes),
            ModelName::MobileS49 => mobile_spinenet_s49_spec(classes),
            ModelName::MobileS49minus => mobile_spinenet_s49minus_spec(classes),
            ModelName::ResnetS50 => resnet_s50_spec(classes),
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Named model to build.
    #[arg(long, value_enum, conflicts_with = "spec")]
    model: Option<ModelName>,
    /// Existing spec file to normalize/transform instead of a named model.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of output classes (required with --model).
    #[arg(long, required_unless_present = "spec")]
    classes: Option<u32>,
    /// Override the output stride.
    #[arg(long, value_parser = ["4", "8", "16"])]
    output_stride: Option<String>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Input size as HxW, e.g. 640x640.
    #[arg(long)]
    input: String,
    /// Compare against embedded published figures when the spec matches a
    /// named configuration.
    #[arg(long)]
    anchor: bool,
    /// Emit JSON instead of the text table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Weight archive produced by a previous run.
    #[arg(long, conflicts_with = "random_seed")]
    weights: Option<PathBuf>,
    /// Deterministically initialize weights from this seed.
    #[arg(long)]
    random_seed: Option<u64>,
    /// Input tensor file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write a class-index map instead of logits.
    #[arg(long)]
    argmax: bool,
    /// Also write the (possibly generated) weights to this archive.
    #[arg(long)]
    save_weights: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_parser = ["dot", "json"])]
    format: String,
    #[arg(long)]
    out: PathBuf,
    /// Input size used for shape annotations (HxW).
    #[arg(long, default_value = "512x512")]
    input: String,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// `flops` or `cmd:PATH` (spec JSON on stdin, decimal reward on stdout).
    #[arg(long, default_value = "flops")]
    evaluator: String,
    /// Search-space config JSON; the default config derives its FLOP budget
    /// from the sequential baseline at 640x640.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for trials.jsonl and report.json (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Candidates kept in the report.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn parse_hw(text: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = text.split('x').collect();
    let err = || CliError::Usage(format!("input size '{text}' must look like 640x640"));
    if parts.len() != 2 {
        return Err(err());
    }
    let h = parts[0].parse().map_err(|_| err())?;
    let w = parts[1].parse().map_err(|_| err())?;
    if h == 0 || w == 0 {
        return Err(err());
    }
    Ok((h, w))
}

fn load_spec(path: &Path) -> Result<ModelSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    let spec = parse_spec(&text).map_err(validation)?;
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        let joined: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Validation(joined.join("; ")));
    }
    Ok(spec)
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_build(args: BuildArgs) -> Result<(), CliError> {
    let mut spec = match (&args.model, &args.spec) {
        (Some(model), None) => {
            let classes = args.classes.expect("clap enforces --classes with --model");
            model.build(classes)
        }
        (None, Some(path)) => {
            let mut spec = load_spec(path)?;
            if let Some(classes) = args.classes {
                spec.num_classes = classes;
            }
            spec
        }
        _ => {
            return Err(CliError::Usage(
                "pass exactly one of --model or --spec".into(),
            ))
        }
    };
    if let Some(os) = &args.output_stride {
        let os: u32 = os.parse().expect("clap restricts values");
        spec = set_output_stride(&spec, os).map_err(validation)?;
    }
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        let joined: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Validation(joined.join("; ")));
    }
    write_output(&args.out, &serialize_spec(&spec))
}

fn render_stats(stats: &ModelStats, anchor: bool, json: bool) -> String {
    if json {
        let mut value = stats.to_json();
        if !anchor {
            value.as_object_mut().map(|o| o.remove("anchor"));
        }
        let mut text = serde_json::to_string_pretty(&value).expect("stats json");
        text.push('\n');
        text
    } else {
        let mut text = stats.to_table();
        if anchor && stats.anchor.is_none() {
            text.push_str("anchor: no published configuration matches this spec\n");
        }
        if !anchor {
            // strip the anchor lines from the default rendering
            text = text
                .lines()
                .filter(|l| !l.starts_with("anchor "))
                .collect::<Vec<_>>()
                .join("\n")
                + "\n";
        }
        text
    }
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let input_hw = parse_hw(&args.input)?;
    let graph = build_graph(&spec, input_hw, spec.num_classes as usize).map_err(validation)?;
    let stats = stats_for_graph(&spec, &graph, input_hw).map_err(validation)?;
    write_output(&args.out, &render_stats(&stats, args.anchor, args.json))
}

fn cmd_infer(args: InferArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let input_bytes = fs::File::open(&args.input)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", args.input.display())))?;
    let mut reader = std::io::BufReader::new(input_bytes);
    let input = read_tensor(&mut reader).map_err(runtime)?;
    let (_, h, w, _) = input.dims();
    let graph = build_graph(&spec, (h, w), spec.num_classes as usize).map_err(validation)?;
    let weights = match (&args.weights, args.random_seed) {
        (Some(path), None) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
            read_weights(&mut std::io::BufReader::new(file)).map_err(runtime)?
        }
        (None, seed) => init_random_weights(&graph, seed.unwrap_or(0)),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if let Some(path) = &args.save_weights {
        let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(runtime)?);
        spineseg::tensorops::write_weights(&mut file, &weights).map_err(runtime)?;
    }
    let logits = execute(&graph, &input, &weights).map_err(runtime)?;
    let output = if args.argmax {
        argmax_map(&logits)
    } else {
        logits
    };
    let mut file = std::io::BufWriter::new(
        fs::File::create(&args.out)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", args.out.display())))?,
    );
    write_tensor(&mut file, &output).map_err(runtime)?;
    file.flush().map_err(runtime)?;
    Ok(())
}

/// Collapses the class axis to the index of the strongest logit (stored as
/// f32; ties resolve to the lowest index).
fn argmax_map(logits: &Tensor) -> Tensor {
    let (n, h, w, c) = logits.dims();
    let mut out = Tensor::zeros((n, h, w, 1));
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let mut best = 0usize;
                let mut best_value = logits.at(b, y, x, 0);
                for ch in 1..c {
                    let v = logits.at(b, y, x, ch);
                    if v > best_value {
                        best_value = v;
                        best = ch;
                    }
                }
                out.set(b, y, x, 0, best as f32);
            }
        }
    }
    out
}

fn cmd_export(args: ExportArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let input_hw = parse_hw(&args.input)?;
    let graph = build_graph(&spec, input_hw, spec.num_classes as usize).map_err(validation)?;
    let content = match args.format.as_str() {
        "dot" => export_dot(&graph),
        "json" => {
            let mut text = serde_json::to_string_pretty(&summary_json(&graph).map_err(validation)?)
                .expect("summary json");
            text.push('\n');
            text
        }
        _ => unreachable!("clap restricts values"),
    };
    write_output(&Some(args.out), &content)
}

fn cmd_search(args: SearchArgs) -> Result<(), CliError> {
    let config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
            serde_json::from_str::<SearchConfig>(&text).map_err(validation)?
        }
        None => SearchConfig::default_config().map_err(validation)?,
    };
    config.validate().map_err(validation)?;
    let mut workers = args.workers.max(1);
    if let Ok(cap) = std::env::var("SPINESEG_THREADS") {
        if let Ok(cap) = cap.parse::<usize>() {
            workers = workers.min(cap.max(1));
        }
    }
    let evaluator: Box<dyn Evaluator> = if args.evaluator == "flops" {
        Box::new(NegativeFlopsEvaluator {
            input_hw: config.input_hw,
        })
    } else if let Some(program) = args.evaluator.strip_prefix("cmd:") {
        Box::new(CommandEvaluator {
            program: program.to_string(),
        })
    } else {
        return Err(CliError::Usage(format!(
            "evaluator '{}' must be 'flops' or 'cmd:PATH'",
            args.evaluator
        )));
    };
    let run = random_search(&config, args.trials, evaluator.as_ref(), workers, args.seed)
        .map_err(validation)?;
    let report = report_json(&run, &config, &evaluator.describe(), args.seed, args.top);
    let mut report_text = serde_json::to_string_pretty(&report).expect("report json");
    report_text.push('\n');
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(runtime)?;
            let mut log = std::io::BufWriter::new(
                fs::File::create(dir.join("trials.jsonl")).map_err(runtime)?,
            );
            write_trial_log(&mut log, &run.records).map_err(runtime)?;
            log.flush().map_err(runtime)?;
            fs::write(dir.join("report.json"), report_text).map_err(runtime)?;
            println!(
                "search finished: {} trials, {} feasible, {} infeasible, {} errors -> {}",
                run.records.len(),
                run.feasible,
                run.infeasible,
                run.errors,
                dir.display()
            );
        }
        None => print!("{report_text}"),
    }
    Ok(())
}

fn cmd_verify() -> Result<(), CliError> {
    let results = spineseg::verify::run_all();
    let mut all = true;
    for check in &results {
        println!(
            "[{}] {} - {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
        all &= check.passed;
    }
    if all {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::Validation(
            "one or more embedded checks failed".into(),
        ))
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            let _ = e.print();
            std::process::exit(0);
        }
        CliError::Usage(e.to_string())
    })?;
    match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Export(args) => cmd_export(args),
        Command::Search(args) => cmd_search(args),
        Command::Verify => cmd_verify(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
