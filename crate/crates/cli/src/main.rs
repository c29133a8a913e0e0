//! `encodebench` command-line front end.
//!
//! Diagnostics and the resolved configuration go to stderr. Stdout carries
//! one JSON object per line. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use encodebench::features::{
    build_oasm, build_sentence_length, build_sentence_position, build_word_position, sweep_oasm_sigma, FeatureSpace,
};
use encodebench::matrixio::{load_manifest, save_matrix};
use encodebench::pipeline::{file_label, fit_model, mode_plan, run_analysis, write_report, AnalysisConfig};
use encodebench::splits::{shuffle_plan, SplitMode, SplitSpec};
use encodebench::synthgen::{build_preset, write_dataset, Preset};
use serde_json::{json, Value};

const THREADS_ENV: &str = "ENCODEBENCH_THREADS";
const CONFIG_FILE: &str = "analysis.json";

#[derive(Debug, Parser)]
#[command(name = "encodebench", version, about = "Banded ridge encoding models with leakage-aware evaluation")]
struct Cli {
    /// Seed for every stochastic step; overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to ENCODEBENCH_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory that receives every file the command writes.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and a matching analysis config.
    Synth {
        #[arg(long)]
        preset: String,
    },
    /// Build a feature space and write it as a matrix file.
    Features(FeaturesArgs),
    /// Plan train/validation/test folds for a manifest.
    Split(SplitArgs),
    /// Fit one model.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated spaces; defaults to all declared spaces.
        #[arg(long, value_delimiter = ',')]
        model: Vec<String>,
        #[arg(long, value_enum, default_value_t = ModeArg::Contiguous)]
        mode: ModeArg,
    },
    /// Run a full analysis and write its report.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the OASM width on the validation folds of a split.
    OasmSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Contiguous)]
        mode: ModeArg,
    },
    /// Print the tables of an existing report directory.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long, value_enum)]
    kind: FeatureKind,
    /// Manifest whose sample blocks define OASM.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Sentences per passage (sentence-position), words per sentence
    /// (sentence-length, word-position).
    #[arg(long, value_delimiter = ',')]
    lengths: Vec<i64>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 4)]
    passages_per_category: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    selection_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Contiguous)]
    mode: ModeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Contiguous,
    Shuffled,
}

impl From<ModeArg> for SplitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Contiguous => SplitMode::Contiguous,
            ModeArg::Shuffled => SplitMode::Shuffled,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Pereira,
    Fedorenko,
    Blank,
    GenericGrouped,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeatureKind {
    Oasm,
    SentencePosition,
    SentenceLength,
    WordPosition,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<encodebench::Error> for Failure {
    fn from(e: encodebench::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Failure::Usage("thread count must be positive".into()));
    }
    Ok(n)
}

fn run(cli: Cli) -> Outcome {
    let threads = thread_count(cli.threads)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Usage(e.to_string()))?;
    pool.install(|| dispatch(&cli))
}

fn output_dir(cli: &Cli) -> Result<&Path, Failure> {
    cli.output
        .as_deref()
        .ok_or_else(|| Failure::Usage("this command needs --output".into()))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))
}

fn emit(value: Value) {
    println!("{value}");
}

fn log_config(value: &Value) {
    eprintln!("resolved config: {value}");
}

fn load_config(cli: &Cli, path: &Path) -> Result<(AnalysisConfig, PathBuf), Failure> {
    let mut config = AnalysisConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    log_config(&serde_json::to_value(&config).map_err(|e| Failure::Data(e.to_string()))?);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Synth { preset } => synth(cli, preset),
        Command::Features(args) => features(cli, args),
        Command::Split(args) => split(cli, args),
        Command::Fit { config, model, mode } => fit(cli, config, model, (*mode).into()),
        Command::Compare { config } => compare(cli, config),
        Command::OasmSweep { config, mode } => oasm_sweep(cli, config, (*mode).into()),
        Command::Report { input } => report(cli, input),
    }
}

fn synth(cli: &Cli, preset: &str) -> Outcome {
    let out = output_dir(cli)?;
    let preset = Preset::from_name(preset).map_err(|e| Failure::Usage(e.to_string()))?;
    let seed = cli.seed.unwrap_or(0);
    log_config(&json!({"preset": preset.name(), "seed": seed}));
    let data = build_preset(preset, seed)?;
    let mut config = AnalysisConfig::for_dataset(&data);
    config.seed = seed;
    create_dir(out)?;
    let manifest = write_dataset(out, &data)?;
    let config_path = out.join(CONFIG_FILE);
    fs::write(&config_path, config.to_json()? + "\n")
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", config_path.display())))?;
    emit(json!({
        "command": "synth",
        "preset": preset.name(),
        "seed": seed,
        "n_samples": data.recording.n_samples(),
        "n_units": data.recording.n_units(),
        "manifest": manifest,
        "config": config_path,
    }));
    Ok(())
}

fn lengths_as_usize(lengths: &[i64]) -> Result<Vec<usize>, Failure> {
    lengths
        .iter()
        .map(|&l| usize::try_from(l).map_err(|_| Failure::Usage(format!("negative length {l}"))))
        .collect()
}

fn features(cli: &Cli, args: &FeaturesArgs) -> Outcome {
    let out = output_dir(cli)?;
    let need_lengths = || {
        if args.lengths.is_empty() {
            Err(Failure::Usage("--lengths is required for this feature".into()))
        } else {
            Ok(())
        }
    };
    let space: FeatureSpace = match args.kind {
        FeatureKind::Oasm => {
            let manifest = args
                .manifest
                .as_ref()
                .ok_or_else(|| Failure::Usage("--manifest is required for oasm".into()))?;
            let sigma = args.sigma.ok_or_else(|| Failure::Usage("--sigma is required for oasm".into()))?;
            let data = load_manifest(manifest)?;
            let r = &data.recording;
            build_oasm(r.n_samples(), &r.sample_blocks, sigma)?
        }
        FeatureKind::SentencePosition => {
            need_lengths()?;
            build_sentence_position(&lengths_as_usize(&args.lengths)?)?
        }
        FeatureKind::SentenceLength => {
            need_lengths()?;
            build_sentence_length(&args.lengths)?
        }
        FeatureKind::WordPosition => {
            need_lengths()?;
            build_word_position(&lengths_as_usize(&args.lengths)?)?
        }
    };
    log_config(&json!({"kind": format!("{:?}", args.kind), "sigma": args.sigma, "lengths": args.lengths}));
    create_dir(out)?;
    let path = out.join(format!("{}.bbsm", file_label(&space.name)));
    save_matrix(&path, &space.data)?;
    emit(json!({
        "command": "features",
        "name": space.name,
        "rows": space.n_samples(),
        "dims": space.dims(),
        "path": path,
    }));
    Ok(())
}

fn split(cli: &Cli, args: &SplitArgs) -> Outcome {
    let out = output_dir(cli)?;
    let spec = match args.scheme {
        SchemeArg::Pereira => SplitSpec::Pereira {
            passages_per_category: args.passages_per_category,
        },
        SchemeArg::Fedorenko => SplitSpec::Fedorenko,
        SchemeArg::Blank => SplitSpec::Blank,
        SchemeArg::GenericGrouped => SplitSpec::GenericGrouped { folds: args.folds },
    };
    let mode: SplitMode = args.mode.into();
    let seed = cli.seed.unwrap_or(0);
    log_config(&json!({"split": spec, "selection_seed": args.selection_seed, "mode": mode, "seed": seed}));
    let data = load_manifest(&args.manifest)?;
    let mut plan = spec.plan(&data.recording, args.selection_seed)?;
    if mode == SplitMode::Shuffled {
        plan = shuffle_plan(&plan, seed);
    }
    create_dir(out)?;
    let path = out.join(format!("split_{}.json", mode.as_str()));
    fs::write(&path, plan.to_json()? + "\n").map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
    emit(json!({
        "command": "split",
        "mode": mode,
        "n_outer_folds": plan.n_outer(),
        "inner_folds": plan.inner_counts(),
        "path": path,
    }));
    Ok(())
}

fn fit(cli: &Cli, config_path: &Path, model: &[String], mode: SplitMode) -> Outcome {
    let out = output_dir(cli)?;
    let (config, base) = load_config(cli, config_path)?;
    let model: Vec<String> = if model.is_empty() { config.declared_spaces()? } else { model.to_vec() };
    let data = load_manifest(base.join(&config.manifest))?;
    let (fit, sigma) = fit_model(&config, &data, &model, mode)?;
    let r2 = &fit.test_r2;
    let clipped = encodebench::metrics::clip_and_average(
        r2.as_slice().expect("contiguous scores"),
        &data.recording.unit_participants,
    )?;
    let label = file_label(&model.join("+"));
    create_dir(out)?;
    let record = out.join(format!("fit_{}_{label}.json", mode.as_str()));
    let json = serde_json::to_string_pretty(&fit.record()).map_err(|e| Failure::Data(e.to_string()))?;
    fs::write(&record, json + "\n").map_err(|e| Failure::Data(format!("cannot write {}: {e}", record.display())))?;
    let preds = out.join(format!("predictions_{}_{label}.bbsm", mode.as_str()));
    save_matrix(&preds, &fit.test_predictions)?;
    emit(json!({
        "command": "fit",
        "mode": mode,
        "model": model.join("+"),
        "oasm_sigma": sigma,
        "mean_r2": r2.mean(),
        "clipped_mean": clipped.mean,
        "clipped_sem": clipped.sem,
        "fit": record,
        "predictions": preds,
    }));
    Ok(())
}

fn compare(cli: &Cli, config_path: &Path) -> Outcome {
    let out = output_dir(cli)?;
    let (config, base) = load_config(cli, config_path)?;
    let report = run_analysis(&config, &base)?;
    create_dir(out)?;
    write_report(out, &report)?;
    let summary = serde_json::to_value(&report.summary).map_err(|e| Failure::Data(e.to_string()))?;
    emit_summary_lines(&summary);
    emit(json!({"command": "compare", "report": out, "seconds": report.total_seconds}));
    Ok(())
}

fn oasm_sweep(cli: &Cli, config_path: &Path, mode: SplitMode) -> Outcome {
    let out = output_dir(cli)?;
    let (config, base) = load_config(cli, config_path)?;
    let data = load_manifest(base.join(&config.manifest))?;
    let plan = mode_plan(&config, &data.recording, mode)?;
    let sweep = sweep_oasm_sigma(&data.recording, &plan, &config.ridge, &config.search_config())?;
    create_dir(out)?;
    let path = out.join(format!("oasm_sweep_{}.json", mode.as_str()));
    let json = serde_json::to_string_pretty(&sweep).map_err(|e| Failure::Data(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
    emit(json!({
        "command": "oasm-sweep",
        "mode": mode,
        "best_sigma": sweep.best_sigma,
        "best_score": sweep.scores[sweep.best_index],
        "path": path,
    }));
    Ok(())
}

/// One line per model, ratio and test of every mode.
fn emit_summary_lines(summary: &Value) {
    let empty = Vec::new();
    for mode in summary["modes"].as_array().unwrap_or(&empty) {
        let name = &mode["mode"];
        for m in mode["models"].as_array().unwrap_or(&empty) {
            emit(json!({
                "kind": "model",
                "mode": name,
                "model": m["label"],
                "mean_r2": m["mean_r2"],
                "clipped_mean": m["clipped"]["mean"],
                "clipped_sem": m["clipped"]["sem"],
            }));
        }
        for o in mode["omega"].as_array().unwrap_or(&empty) {
            emit(json!({"kind": "omega", "mode": name, "model": o["model"], "mean": o["summary"]["mean"], "sem": o["summary"]["sem"], "error": o["error"]}));
        }
        if !mode["phi"].is_null() {
            let p = &mode["phi"];
            emit(json!({"kind": "phi", "mode": name, "model": p["model"], "mean": p["summary"]["mean"], "sem": p["summary"]["sem"], "error": p["error"]}));
        }
        for t in mode["tests"].as_array().unwrap_or(&empty) {
            emit(json!({"kind": "test", "mode": name, "name": t["name"], "n_units": t["n_units"], "n_rejected": t["n_rejected"], "error": t["error"]}));
        }
    }
}

fn report(cli: &Cli, input: &Path) -> Outcome {
    let path = input.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let summary: Value =
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if !summary["modes"].is_array() {
        return Err(Failure::Data(format!("{} is not a report summary", path.display())));
    }
    log_config(&summary["config"]);
    emit_summary_lines(&summary);
    if let Some(out) = &cli.output {
        let mut csv = String::from("mode,model,mean_r2,clipped_mean,clipped_sem\n");
        for mode in summary["modes"].as_array().into_iter().flatten() {
            for m in mode["models"].as_array().into_iter().flatten() {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    mode["mode"].as_str().unwrap_or_default(),
                    m["label"].as_str().unwrap_or_default(),
                    m["mean_r2"],
                    m["clipped"]["mean"],
                    m["clipped"]["sem"]
                ));
            }
        }
        create_dir(out)?;
        let table = out.join("models.csv");
        fs::write(&table, csv).map_err(|e| Failure::Data(format!("cannot write {}: {e}", table.display())))?;
        emit(json!({"command": "report", "table": table}));
    }
    Ok(())
}
