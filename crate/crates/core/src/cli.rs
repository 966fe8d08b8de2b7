//! Command-line front end.
//!
//! Seven subcommands cover the flow from a trained network to synthesizable
//! hardware: `quantize` (find the smallest accuracy-preserving fraction
//! width), `tune` (architecture-aware weight cheapening), `synth` (shift-add
//! network listings), `emit` (RTL, testbench, synthesis script), `simulate`
//! (bit-exact integer accuracy), `report` (cost summary), and `pipeline`
//! (all of the above in order).
//!
//! Every command is deterministic given its inputs and `--seed`: the seed
//! (default 0) drives the only randomness, the validation split, and is
//! echoed in the output so runs can be reproduced. Each command prints a
//! final single-line JSON object with its key numbers; failures print a
//! single-line JSON error to stderr and exit nonzero.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::fixedpoint::{model_tnzd, quantize_model, QuantizeError, QuantizedAnn};
use crate::hdlgen::{
    check_fileset, emit_design, emit_synth_script, emit_testbench, CheckError, EmitError,
};
use crate::inference::{accuracy_on_encoded, encode_dataset, Architecture, CostReport};
use crate::model::{load_dataset, load_model, split_validation, Dataset, ModelError};
use crate::quantsearch::{find_min_q, MinQResult, SearchError};
use crate::shiftadds::{layer_block, optimize_cse, verify_dag, Effort, MultStyle, SynthError};
use crate::tuner::{tune_parallel, tune_smac, TuneResult, TuneScope};

/// Input codes are quarter-precision u(8,8) throughout the toolchain.
const INPUT_BITS: u32 = 8;
const INPUT_FRAC_BITS: u32 = 8;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("failed to {action} {path}: {source}")]
    Io { action: &'static str, path: PathBuf, source: std::io::Error },
    #[error("invalid network file: {0}")]
    BadNet(String),
    #[error("layer {layer} block failed equivalence checking against its constants")]
    VerifyFailed { layer: usize },
    #[error("the dataset has no samples to draw stimulus vectors from")]
    NoStimulus,
}

/// Parses arguments and runs one subcommand; the binary's whole `main`.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

#[derive(Parser)]
#[command(
    name = "annsynth",
    version,
    about = "Fixed-point hardware synthesis for feedforward neural networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the smallest weight fraction width that keeps accuracy stable.
    Quantize(QuantizeArgs),
    /// Cheapen quantized weights without losing hardware accuracy.
    Tune(TuneArgs),
    /// Synthesize the shift-add networks and write their listings.
    Synth(SynthArgs),
    /// Emit RTL, a golden-model testbench, and a synthesis script.
    Emit(EmitArgs),
    /// Run the bit-exact integer model over a dataset and print accuracy.
    Simulate(SimulateArgs),
    /// Print the hardware cost report.
    Report(ReportArgs),
    /// Run quantize, tune, synth, emit, simulate, and report in order.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct QuantizeArgs {
    /// Trained network description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Labeled dataset (CSV; feature columns then a class column).
    #[arg(long)]
    data: PathBuf,
    /// Largest fraction width to try.
    #[arg(long, default_value_t = 16)]
    max_q: u32,
    /// Fraction of the dataset held out for validation.
    #[arg(long, default_value_t = 0.3)]
    val_fraction: f64,
    /// Seed for the validation split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving quantized.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    /// Quantized network (JSON, as written by quantize).
    #[arg(long)]
    net: PathBuf,
    /// Labeled dataset (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Target architecture; selects the tuning strategy.
    #[arg(long)]
    arch: Architecture,
    /// Fraction of the dataset held out for validation.
    #[arg(long, default_value_t = 0.3)]
    val_fraction: f64,
    /// Seed for the validation split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving tuned.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Quantized network (JSON).
    #[arg(long)]
    net: PathBuf,
    /// Target architecture.
    #[arg(long)]
    arch: Architecture,
    /// Multiplier realization.
    #[arg(long)]
    mult_style: MultStyle,
    /// Sharing effort: greedy or exhaustive.
    #[arg(long, default_value = "greedy", value_parser = parse_effort)]
    effort: Effort,
    /// Random vectors for the post-synthesis equivalence check.
    #[arg(long, default_value_t = 100)]
    trials: u32,
    /// Directory receiving dags/.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EmitArgs {
    /// Quantized network (JSON).
    #[arg(long)]
    net: PathBuf,
    /// Labeled dataset providing testbench stimulus.
    #[arg(long)]
    data: PathBuf,
    /// Target architecture.
    #[arg(long)]
    arch: Architecture,
    /// Multiplier realization.
    #[arg(long)]
    mult_style: MultStyle,
    /// Top module name.
    #[arg(long, default_value = "ann_top")]
    top: String,
    /// Stimulus vectors taken from the head of the dataset.
    #[arg(long, default_value_t = 8)]
    vectors: usize,
    /// Clock constraint for the synthesis script, in time units.
    #[arg(long, default_value_t = 1.0)]
    clock_period: f64,
    /// Directory receiving rtl/, tb/, and scripts/.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Quantized network (JSON).
    #[arg(long)]
    net: PathBuf,
    /// Labeled dataset (CSV).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Quantized network (JSON).
    #[arg(long)]
    net: PathBuf,
    /// Target architecture.
    #[arg(long)]
    arch: Architecture,
    /// Multiplier realization.
    #[arg(long)]
    mult_style: MultStyle,
    /// Sharing effort for the shift-add operation count.
    #[arg(long, default_value = "greedy", value_parser = parse_effort)]
    effort: Effort,
    /// Dataset for the hardware-accuracy row (optional).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Trained network description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Labeled dataset (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Target architecture.
    #[arg(long)]
    arch: Architecture,
    /// Multiplier realization.
    #[arg(long)]
    mult_style: MultStyle,
    /// Largest fraction width to try.
    #[arg(long, default_value_t = 16)]
    max_q: u32,
    /// Fraction of the dataset held out for validation.
    #[arg(long, default_value_t = 0.3)]
    val_fraction: f64,
    /// Seed for the validation split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sharing effort: greedy or exhaustive.
    #[arg(long, default_value = "greedy", value_parser = parse_effort)]
    effort: Effort,
    /// Random vectors for the post-synthesis equivalence check.
    #[arg(long, default_value_t = 100)]
    trials: u32,
    /// Top module name.
    #[arg(long, default_value = "ann_top")]
    top: String,
    /// Stimulus vectors taken from the head of the dataset.
    #[arg(long, default_value_t = 8)]
    vectors: usize,
    /// Clock constraint for the synthesis script, in time units.
    #[arg(long, default_value_t = 1.0)]
    clock_period: f64,
    /// Directory receiving every artifact.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn parse_effort(s: &str) -> Result<Effort, String> {
    match s {
        "greedy" => Ok(Effort::Greedy),
        "exhaustive" => Ok(Effort::Exhaustive),
        other => Err(format!("unknown effort {other:?}; expected greedy or exhaustive")),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Quantize(args) => cmd_quantize(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Emit(args) => cmd_emit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

// ---------------------------------------------------------------------------
// Stages, shared between the individual commands and the pipeline.
// ---------------------------------------------------------------------------

fn stage_quantize(
    model_path: &Path,
    data: &Dataset,
    max_q: u32,
    val_fraction: f64,
    seed: u64,
) -> Result<(QuantizedAnn, MinQResult), CliError> {
    let model = load_model(model_path)?;
    let (_, validation) = split_validation(data, val_fraction, seed);
    println!(
        "validation split: {} of {} samples (seed {seed})",
        validation.samples.len(),
        data.samples.len()
    );
    let result = find_min_q(&model, &validation, INPUT_BITS, INPUT_FRAC_BITS, max_q)?;
    let qa = quantize_model(&model, result.q, INPUT_BITS, INPUT_FRAC_BITS)?;
    Ok((qa, result))
}

fn stage_tune(
    qa: &mut QuantizedAnn,
    data: &Dataset,
    arch: Architecture,
    val_fraction: f64,
    seed: u64,
) -> TuneResult {
    let (_, validation) = split_validation(data, val_fraction, seed);
    let encoded = encode_dataset(&validation, &qa.format);
    match arch {
        Architecture::Parallel => tune_parallel(qa, &encoded),
        Architecture::SmacNeuron => tune_smac(qa, &encoded, TuneScope::PerNeuron),
        Architecture::SmacAnn => tune_smac(qa, &encoded, TuneScope::Global),
    }
}

/// Synthesizes every constant-multiplication block of the network; returns
/// listing files plus the total operation count (`None` with behavioral
/// multipliers, which need no blocks).
fn stage_synth(
    qa: &QuantizedAnn,
    arch: Architecture,
    style: MultStyle,
    effort: Effort,
    trials: u32,
) -> Result<(BTreeMap<String, String>, Option<u64>), CliError> {
    let mut files = BTreeMap::new();
    let mut total = 0u64;
    let mut any = false;
    for layer in 0..qa.structure.layers.len() {
        let blocks = layer_block(arch, style, qa, layer)?;
        let per_neuron = blocks.len() > 1;
        for (b, block) in blocks.iter().enumerate() {
            let dag = optimize_cse(block, effort)?;
            if trials > 0 && !verify_dag(&dag, block, trials) {
                return Err(CliError::VerifyFailed { layer });
            }
            total += dag.opcount();
            any = true;
            let name = if per_neuron {
                format!("dags/l{}_n{}.txt", layer + 1, b + 1)
            } else {
                format!("dags/l{}.txt", layer + 1)
            };
            files.insert(name, dag.listing());
        }
    }
    Ok((files, any.then_some(total)))
}

fn stage_emit(
    qa: &QuantizedAnn,
    arch: Architecture,
    style: MultStyle,
    top: &str,
    data: &Dataset,
    vectors: usize,
    clock_period: f64,
) -> Result<BTreeMap<String, String>, CliError> {
    let encoded = encode_dataset(data, &qa.format);
    let stimulus: Vec<Vec<i64>> =
        encoded.iter().take(vectors).map(|(codes, _)| codes.clone()).collect();
    if stimulus.is_empty() {
        return Err(CliError::NoStimulus);
    }
    let mut files = emit_design(qa, arch, style, top)?;
    files.extend(emit_testbench(qa, arch, &stimulus, top)?);
    check_fileset(&files)?;
    files.insert(
        "scripts/synth.tcl".to_string(),
        emit_synth_script(top, clock_period),
    );
    Ok(files)
}

fn full_accuracy(qa: &QuantizedAnn, data: &Dataset) -> (usize, usize, f64) {
    let encoded = encode_dataset(data, &qa.format);
    let accuracy = accuracy_on_encoded(qa, &encoded);
    let samples = encoded.len();
    let correct = (accuracy * samples as f64).round() as usize;
    (samples, correct, accuracy)
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

fn cmd_quantize(args: QuantizeArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let (qa, result) =
        stage_quantize(&args.model, &data, args.max_q, args.val_fraction, args.seed)?;
    let path = args.out_dir.join("quantized.json");
    save_net(&qa, &path)?;
    for (q, ha) in &result.history {
        println!("q={q}: hardware accuracy {ha:.4}");
    }
    println!("{}", serde_json::json!({
        "stage": "quantize",
        "q": result.q,
        "hardware_accuracy": result.ha,
        "exhausted": result.exhausted,
        "seed": args.seed,
        "net": path,
    }));
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<(), CliError> {
    let mut qa = load_net(&args.net)?;
    let data = load_dataset(&args.data)?;
    let tnzd_before = model_tnzd(&qa);
    let result = stage_tune(&mut qa, &data, args.arch, args.val_fraction, args.seed);
    let tnzd_after = model_tnzd(&qa);
    let path = args.out_dir.join("tuned.json");
    save_net(&qa, &path)?;
    println!("{}", serde_json::json!({
        "stage": "tune",
        "arch": args.arch,
        "initial_ha": result.initial_ha,
        "final_ha": result.final_ha,
        "passes": result.passes,
        "commits": result.commits,
        "tnzd_before": tnzd_before,
        "tnzd_after": tnzd_after,
        "seed": args.seed,
        "net": path,
    }));
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let qa = load_net(&args.net)?;
    let (files, adders) =
        stage_synth(&qa, args.arch, args.mult_style, args.effort, args.trials)?;
    write_files(&args.out_dir, &files)?;
    println!("{}", serde_json::json!({
        "stage": "synth",
        "arch": args.arch,
        "mult_style": args.mult_style,
        "adders": adders,
        "listings": files.len(),
        "out_dir": args.out_dir,
    }));
    Ok(())
}

fn cmd_emit(args: EmitArgs) -> Result<(), CliError> {
    let qa = load_net(&args.net)?;
    let data = load_dataset(&args.data)?;
    let files = stage_emit(
        &qa,
        args.arch,
        args.mult_style,
        &args.top,
        &data,
        args.vectors,
        args.clock_period,
    )?;
    write_files(&args.out_dir, &files)?;
    println!("{}", serde_json::json!({
        "stage": "emit",
        "arch": args.arch,
        "mult_style": args.mult_style,
        "top": args.top,
        "files": files.len(),
        "out_dir": args.out_dir,
    }));
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let qa = load_net(&args.net)?;
    let data = load_dataset(&args.data)?;
    let (samples, correct, accuracy) = full_accuracy(&qa, &data);
    println!("{}", serde_json::json!({
        "stage": "simulate",
        "samples": samples,
        "correct": correct,
        "hardware_accuracy": accuracy,
    }));
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let qa = load_net(&args.net)?;
    let (_, adders) = stage_synth(&qa, args.arch, args.mult_style, args.effort, 0)?;
    let accuracy = match &args.data {
        Some(path) => Some(full_accuracy(&qa, &load_dataset(path)?).2),
        None => None,
    };
    let report = CostReport::build(args.arch, args.mult_style, &qa, adders, accuracy);
    print!("{}", report.to_table());
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;

    let (mut qa, min_q) =
        stage_quantize(&args.model, &data, args.max_q, args.val_fraction, args.seed)?;
    save_net(&qa, &args.out_dir.join("quantized.json"))?;
    println!(
        "quantize: q={} hardware accuracy {:.4}{}",
        min_q.q,
        min_q.ha,
        if min_q.exhausted { " (search exhausted)" } else { "" }
    );

    let tnzd_before = model_tnzd(&qa);
    let tune = stage_tune(&mut qa, &data, args.arch, args.val_fraction, args.seed);
    save_net(&qa, &args.out_dir.join("tuned.json"))?;
    println!(
        "tune: {} commits over {} passes, hardware accuracy {:.4} -> {:.4}, \
         nonzero digits {} -> {}",
        tune.commits,
        tune.passes,
        tune.initial_ha,
        tune.final_ha,
        tnzd_before,
        model_tnzd(&qa)
    );

    let (listings, adders) =
        stage_synth(&qa, args.arch, args.mult_style, args.effort, args.trials)?;
    write_files(&args.out_dir, &listings)?;
    match adders {
        Some(n) => println!("synth: {n} shift-add operations in {} listings", listings.len()),
        None => println!("synth: behavioral multipliers, no shift-add networks"),
    }

    let files = stage_emit(
        &qa,
        args.arch,
        args.mult_style,
        &args.top,
        &data,
        args.vectors,
        args.clock_period,
    )?;
    write_files(&args.out_dir, &files)?;
    println!("emit: {} files under {}", files.len(), args.out_dir.display());

    let (samples, correct, accuracy) = full_accuracy(&qa, &data);
    println!("simulate: {correct}/{samples} correct, hardware accuracy {accuracy:.4}");

    let report = CostReport::build(args.arch, args.mult_style, &qa, adders, Some(accuracy));
    let report_json = format!("{}\n", serde_json::to_string_pretty(&report)?);
    write_files(
        &args.out_dir,
        &BTreeMap::from([("report.json".to_string(), report_json)]),
    )?;
    print!("{}", report.to_table());
    println!("{}", serde_json::json!({
        "stage": "pipeline",
        "q": qa.format.q,
        "hardware_accuracy": accuracy,
        "adders": adders,
        "seed": args.seed,
        "out_dir": args.out_dir,
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// File plumbing.
// ---------------------------------------------------------------------------

fn load_net(path: &Path) -> Result<QuantizedAnn, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        action: "read",
        path: path.to_path_buf(),
        source,
    })?;
    let qa: QuantizedAnn = serde_json::from_str(&text)?;
    validate_net(&qa)?;
    Ok(qa)
}

fn save_net(qa: &QuantizedAnn, path: &Path) -> Result<(), CliError> {
    let text = format!("{}\n", serde_json::to_string_pretty(qa)?);
    write_files(
        path.parent().unwrap_or_else(|| Path::new(".")),
        &BTreeMap::from([(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "net.json".to_string()),
            text,
        )]),
    )
}

fn validate_net(qa: &QuantizedAnn) -> Result<(), CliError> {
    let s = &qa.structure;
    if s.layers.is_empty() || s.num_inputs == 0 {
        return Err(CliError::BadNet("network needs inputs and at least one layer".into()));
    }
    if qa.weights.len() != s.layers.len() || qa.biases.len() != s.layers.len() {
        return Err(CliError::BadNet("weight and bias layer counts differ from the structure".into()));
    }
    for (k, spec) in s.layers.iter().enumerate() {
        let inputs = s.layer_inputs(k);
        if qa.weights[k].len() != spec.neurons || qa.biases[k].len() != spec.neurons {
            return Err(CliError::BadNet(format!(
                "layer {} declares {} neurons but carries {} weight rows and {} biases",
                k + 1,
                spec.neurons,
                qa.weights[k].len(),
                qa.biases[k].len()
            )));
        }
        if let Some(row) = qa.weights[k].iter().find(|row| row.len() != inputs) {
            return Err(CliError::BadNet(format!(
                "layer {} takes {} inputs but has a weight row of {}",
                k + 1,
                inputs,
                row.len()
            )));
        }
    }
    Ok(())
}

fn write_files(out_dir: &Path, files: &BTreeMap<String, String>) -> Result<(), CliError> {
    for (rel, text) in files {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io {
                action: "create directory",
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, text).map_err(|source| CliError::Io {
            action: "write",
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}
