use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vqa_harness::backend::ModelBackend;
use vqa_harness::datasets::{self, DatasetFormat, ReviewRow};
use vqa_harness::exemplars::{embed_missing, load_pool, save_pool};
use vqa_harness::runner::{
    self, compare, default_report_path, file_digest, read_results, rescore, write_results, Backends, EmbedderSpec,
    ExperimentSpec, Report, Runner, Setting,
};

#[derive(Parser)]
#[command(name = "vqa-harness", version, about = "Zero- and few-shot VQA evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results JSONL plus a report.
    Run(RunArgs),
    /// Re-grade stored results, optionally toggling LLM answer parsing.
    Score(ScoreArgs),
    /// Turn Winoground statements into yes/no questions.
    ConvertWinoground(ConvertArgs),
    /// Add question embeddings to an exemplar pool.
    EmbedPool(EmbedArgs),
    /// Aggregate a results file into a report.
    Report(ReportArgs),
    /// Per-type differences between two reports (second minus first).
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// Defaults to `<results>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    sample_limit: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    omit_image: bool,
    #[arg(long)]
    use_llm_parse: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Turn LLM parsing on or off for the re-grade.
    #[arg(long, action = clap::ArgAction::Set)]
    llm_parse: bool,
    /// Experiment TOML supplying the parser backend and dataset digest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Experiment TOML whose text backend (or backend) does the conversion.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// TSV of statement, converted question and validity for manual review.
    #[arg(long)]
    review: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    attempts: usize,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Written in place when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment TOML whose `embedder` table is used; hash embedder otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    ExperimentSpec::from_toml_file(path).with_context(|| format!("loading {}", path.display()))
}

fn parse_setting(s: &str) -> Result<Setting> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).with_context(|| format!("unknown setting {s:?}"))
}

/// Returns true when some samples errored.
fn cmd_run(args: RunArgs) -> Result<bool> {
    let mut spec = load_spec(&args.config)?;
    if let Some(s) = &args.setting {
        spec.setting = parse_setting(s)?;
    }
    if let Some(t) = args.template {
        spec.template = t;
    }
    if args.sample_limit.is_some() {
        spec.sample_limit = args.sample_limit;
    }
    if let Some(w) = args.workers {
        spec.workers = w;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.omit_image |= args.omit_image;
    spec.use_llm_parse |= args.use_llm_parse;
    spec.validate()?;

    let backends = Backends::from_spec(&spec)?;
    let runner = Runner::new(spec, backends)?;
    let report_path = args.report.unwrap_or_else(|| default_report_path(&args.results));
    let outcome = runner.run(&args.results, Some(&report_path))?;
    log::info!("processed {} new samples", outcome.processed);
    print!("{}", outcome.report.to_table());
    Ok(outcome.has_sample_errors())
}

fn report_for(results: &[runner::SampleResult], config: Option<&ExperimentSpec>, extra: serde_json::Value) -> Result<Report> {
    let (name, dataset_digest, mut echo) = match config {
        Some(spec) => (
            spec.name.clone(),
            file_digest(&spec.dataset.path)?,
            serde_json::to_value(spec)?,
        ),
        None => (None, String::new(), serde_json::json!({})),
    };
    if let (Some(obj), serde_json::Value::Object(extra)) = (echo.as_object_mut(), extra) {
        obj.extend(extra);
    }
    let lines: Vec<String> = results.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    let run_digest = vqa_harness::backend::replay::sha256_hex(lines.join("\n").as_bytes());
    Ok(Report::build(name, results, echo, run_digest, dataset_digest))
}

fn cmd_score(args: ScoreArgs) -> Result<bool> {
    let results = read_results(&args.results)?;
    let spec = args.config.as_deref().map(load_spec).transpose()?;
    let parser: Option<std::sync::Arc<dyn ModelBackend>> = match (&spec, args.llm_parse) {
        (Some(spec), true) => Some(Backends::from_spec(spec)?.text),
        (None, true) => bail!("--llm-parse true needs --config to locate the parser backend"),
        _ => None,
    };
    let rescored = rescore(&results, args.llm_parse, parser.as_deref());
    write_results(&args.out, &rescored)?;
    let report = report_for(
        &rescored,
        spec.as_ref(),
        serde_json::json!({ "rescored_from": args.results, "use_llm_parse": args.llm_parse }),
    )?;
    if let Some(path) = &args.report {
        report.write(path)?;
    }
    print!("{}", report.to_table());
    Ok(report.errors > 0)
}

fn cmd_convert(args: ConvertArgs) -> Result<bool> {
    let spec = load_spec(&args.config)?;
    let backend = Backends::from_spec(&spec)?.text;
    let samples = datasets::load_dataset(&args.input, DatasetFormat::Winoground)?.into_winoground(&args.input)?;
    let mut converted = Vec::with_capacity(samples.len());
    let mut rows: Vec<ReviewRow> = Vec::new();
    let mut invalid = 0;
    for sample in &samples {
        let (out, review) = datasets::convert_sample(sample, backend.as_ref(), args.attempts)
            .with_context(|| format!("converting sample {}", sample.id))?;
        if out.questions.is_none() {
            invalid += 1;
            log::warn!("sample {}: conversion did not produce two questions", sample.id);
        }
        rows.extend(review);
        converted.push(out);
    }
    datasets::write_winoground_jsonl(&args.output, &converted)
        .with_context(|| format!("writing {}", args.output.display()))?;
    if let Some(path) = &args.review {
        datasets::write_review_tsv(path, &rows).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("converted {} samples ({} incomplete)", samples.len(), invalid);
    Ok(invalid > 0)
}

fn cmd_embed(args: EmbedArgs) -> Result<bool> {
    let embedder = match &args.config {
        Some(path) => load_spec(path)?.embedder,
        None => EmbedderSpec::default(),
    }
    .build()?;
    let mut pool = load_pool(&args.pool)?;
    let added = embed_missing(&mut pool, embedder.as_ref())?;
    let out = args.out.as_deref().unwrap_or(&args.pool);
    save_pool(out, &pool)?;
    println!("embedded {added} of {} exemplars", pool.len());
    Ok(false)
}

fn cmd_report(args: ReportArgs) -> Result<bool> {
    let results = read_results(&args.results)?;
    let spec = args.config.as_deref().map(load_spec).transpose()?;
    let report = report_for(&results, spec.as_ref(), serde_json::json!({}))?;
    if let Some(path) = &args.out {
        report.write(path)?;
    }
    print!("{}", report.to_table());
    Ok(false)
}

fn cmd_compare(args: CompareArgs) -> Result<bool> {
    let a = Report::load(&args.a)?;
    let b = Report::load(&args.b)?;
    let delta = compare(&a, &b)?;
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&delta)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", delta.to_table());
    Ok(false)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::ConvertWinoground(a) => cmd_convert(a),
        Command::EmbedPool(a) => cmd_embed(a),
        Command::Report(a) => cmd_report(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
