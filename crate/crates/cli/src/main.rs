//! `engage`: one binary for every stage of the loop, from raw click logs to
//! a served subject line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use engage_core::generators::{ChatBackend, TokioSleeper};
use engage_core::jsonl::{read_jsonl_file, write_jsonl};
use engage_core::monitor::{append_report, run_day, MonitorBaseline, DEFAULT_THRESHOLD};
use engage_core::pipeline::{
    aggregate, export_sft, format_pointwise, ingest_logs, label_pairs, write_logs, CatalogEntry, EngagementAggregate,
    PipelineConfig, PreferencePair,
};
use engage_core::reward::{
    classification_report, evaluate_accuracy, train_pairwise, train_pointwise, ClassificationReport, ParamsHandle,
    RewardModelParams, TrainConfig,
};
use engage_core::selector::{offline_best_of_n_eval, BestOfNRow};
use engage_core::serving::{serve, AppState, SelectResponse, ServiceConfig};
use engage_core::simulator::{run_drift_scenario, run_end_to_end, DriftConfig, SimConfig, SimulatedLlm};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing_subscriber::filter::LevelFilter;

#[derive(Parser, Debug)]
#[command(
    name = "engage",
    version,
    about = "Learn subject line preferences from A/B logs and serve the best of N"
)]
struct Cli {
    /// JSON config for the subcommand (pipeline, training, service, simulation or monitor settings).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed overriding the one in the config.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output path; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Join a CSV engagement log with the variant catalog into per-post aggregates (JSONL).
    Ingest(IngestArgs),
    /// Turn aggregates into preference pairs by CTR lift (JSONL).
    Label(LabelArgs),
    /// Fit a reward model on preference pairs and write its params (JSON).
    Train(TrainArgs),
    /// Score a reward model on labeled pairs, optionally with a best-of-N table.
    Eval(EvalArgs),
    /// Select a subject line for one post or a batch of posts.
    Select(SelectArgs),
    /// Run the selection HTTP service.
    Serve,
    /// Run the synthetic A/B loop (or the drift scenario) and write its report.
    Simulate(SimulateArgs),
    /// One daily monitoring step: check accuracy, retrain and swap on drift.
    Monitor(MonitorArgs),
    /// Export winning subjects as policy fine-tuning records (JSONL).
    ExportSft(ExportSftArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Engagement log CSV.
    #[arg(long, value_name = "PATH")]
    logs: PathBuf,
    /// Catalog JSONL with post text and variant subjects.
    #[arg(long, value_name = "PATH")]
    catalog: PathBuf,
}

#[derive(Args, Debug)]
struct LabelArgs {
    /// Aggregates JSONL from `ingest`.
    #[arg(long, value_name = "PATH")]
    aggregates: PathBuf,
    /// Also write the labeling summary here (JSON).
    #[arg(long, value_name = "PATH")]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Pairwise,
    Pointwise,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Preference pairs JSONL.
    #[arg(long, value_name = "PATH")]
    pairs: PathBuf,
    /// Model family to fit.
    #[arg(long, value_enum, default_value_t = Kind::Pairwise)]
    kind: Kind,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Reward model params JSON.
    #[arg(long, value_name = "PATH")]
    params: PathBuf,
    /// Labeled preference pairs JSONL.
    #[arg(long, value_name = "PATH")]
    pairs: PathBuf,
    /// Decision threshold for the generated-wins classification.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Candidate sets JSONL (`{"post_text", "candidates"}`) for a best-of-N table.
    #[arg(long, value_name = "PATH")]
    candidates: Option<PathBuf>,
    /// N values for the best-of-N table.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5])]
    n_values: Vec<usize>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Post id for a single selection.
    #[arg(long, requires = "post_text", conflicts_with = "posts")]
    post_id: Option<String>,
    /// Post text for a single selection.
    #[arg(long, requires = "post_id")]
    post_text: Option<String>,
    /// Batch of `{"post_id", "post_text"}` JSONL records.
    #[arg(long, value_name = "PATH")]
    posts: Option<PathBuf>,
    /// Params JSON overriding the service config's model path.
    #[arg(long, value_name = "PATH")]
    params: Option<PathBuf>,
    /// Pool size including the rule-based candidate.
    #[arg(long)]
    n: Option<usize>,
    /// Generate with the built-in simulated model instead of the remote endpoint.
    #[arg(long)]
    simulated: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Run the preference-shift scenario instead of the A/B loop.
    #[arg(long)]
    drift: bool,
    /// Directory for logs.csv, catalog.jsonl, pairs.jsonl and params.json.
    #[arg(long, value_name = "DIR", conflicts_with = "drift")]
    artifacts: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MonitorArgs {
    /// Deployed params JSON; replaced on a swap, the previous file kept as `<path>.prev`.
    #[arg(long, value_name = "PATH")]
    params: PathBuf,
    /// Fresh ground-truth pairs for today's check.
    #[arg(long, value_name = "PATH")]
    fresh: PathBuf,
    /// Pairs to retrain on when drift is detected.
    #[arg(long, value_name = "PATH")]
    training: PathBuf,
    /// Holdout pairs guarding the swap; also seeds a missing baseline.
    #[arg(long, value_name = "PATH")]
    holdout: PathBuf,
    /// Baseline JSON; created from the holdout accuracy when absent.
    #[arg(long, value_name = "PATH")]
    baseline: PathBuf,
    /// Day being checked (YYYY-MM-DD).
    #[arg(long)]
    day: NaiveDate,
}

#[derive(Args, Debug)]
struct ExportSftArgs {
    /// Preference pairs JSONL.
    #[arg(long, value_name = "PATH")]
    pairs: PathBuf,
}

/// Settings for `monitor`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MonitorSettings {
    threshold: f64,
    min_sample: usize,
    train: TrainConfig,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            min_sample: engage_core::monitor::DEFAULT_MIN_SAMPLE,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalReport {
    pairs: usize,
    accuracy: f64,
    classification: ClassificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_of_n: Option<Vec<BestOfNRow>>,
}

#[derive(Debug, Deserialize)]
struct CandidateSet {
    post_text: String,
    candidates: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct PostInput {
    post_id: String,
    post_text: String,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl_file(path).with_context(|| format!("reading {}", path.display()))
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_lines<T: Serialize>(out: Option<&Path>, items: &[T]) -> Result<()> {
    let mut w = open_out(out)?;
    write_jsonl(&mut w, items)?;
    w.flush()?;
    Ok(())
}

fn load_params(path: &Path) -> Result<RewardModelParams> {
    RewardModelParams::load(path).with_context(|| format!("loading params {}", path.display()))
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let logs = File::open(&args.logs).with_context(|| format!("opening {}", args.logs.display()))?;
    let records = ingest_logs(logs).with_context(|| format!("reading {}", args.logs.display()))?;
    let catalog: Vec<CatalogEntry> = read_records(&args.catalog)?;
    let aggregates = aggregate(&records, &catalog).context("joining logs with catalog")?;
    tracing::info!(records = records.len(), posts = aggregates.len(), "ingested");
    write_lines(cli.out.as_deref(), &aggregates)
}

fn label(cli: &Cli, args: &LabelArgs) -> Result<()> {
    let mut config: PipelineConfig = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let aggregates: Vec<EngagementAggregate> = read_records(&args.aggregates)?;
    let outcome = label_pairs(&aggregates, &config);
    eprintln!("{}", serde_json::to_string(&outcome.summary)?);
    if let Some(path) = &args.summary {
        write_json(Some(path), &outcome.summary)?;
    }
    write_lines(cli.out.as_deref(), &outcome.pairs)
}

fn train_config(cli: &Cli) -> Result<TrainConfig> {
    let mut config: TrainConfig = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let config = train_config(cli)?;
    let pairs: Vec<PreferencePair> = read_records(&args.pairs)?;
    let params = match args.kind {
        Kind::Pairwise => train_pairwise(&pairs, &config)?,
        Kind::Pointwise => {
            let examples: Vec<_> = pairs.iter().flat_map(format_pointwise).collect();
            train_pointwise(&examples, &config)?
        }
    };
    let m = &params.metadata;
    tracing::info!(
        epochs = m.epochs,
        converged = m.converged,
        final_loss = m.final_loss,
        "trained"
    );
    match &cli.out {
        Some(path) => params.save(path).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{}", params.to_json()?);
            Ok(())
        }
    }
}

fn eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let params = load_params(&args.params)?;
    let pairs: Vec<PreferencePair> = read_records(&args.pairs)?;
    let accuracy = evaluate_accuracy(&params, &pairs)?;
    let classification = classification_report(&params, &pairs, args.threshold)?;
    let best_of_n = match &args.candidates {
        Some(path) => {
            let sets: Vec<CandidateSet> = read_records(path)?;
            let sets: Vec<(String, Vec<String>)> = sets.into_iter().map(|s| (s.post_text, s.candidates)).collect();
            Some(offline_best_of_n_eval(&params, &sets, &args.n_values)?)
        }
        None => None,
    };
    write_json(
        cli.out.as_deref(),
        &EvalReport {
            pairs: pairs.len(),
            accuracy,
            classification,
            best_of_n,
        },
    )
}

async fn select(cli: &Cli, args: &SelectArgs) -> Result<()> {
    let config: ServiceConfig = match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    let params = load_params(args.params.as_ref().unwrap_or(&config.model_path))?;
    let backend: Arc<dyn ChatBackend> = if args.simulated {
        Arc::new(SimulatedLlm::new())
    } else {
        Arc::new(engage_core::generators::HttpChatBackend::new(&config.remote)?)
    };
    let state = AppState::assemble(
        &config,
        Arc::new(ParamsHandle::new(params)),
        backend,
        Arc::new(TokioSleeper),
    )?;
    let posts = match (&args.posts, &args.post_id, &args.post_text) {
        (Some(path), _, _) => read_records::<PostInput>(path)?,
        (None, Some(id), Some(text)) => vec![PostInput {
            post_id: id.clone(),
            post_text: text.clone(),
        }],
        _ => bail!("select needs --posts or both --post-id and --post-text"),
    };
    let mut out = Vec::with_capacity(posts.len());
    for p in posts {
        let d = state
            .selector
            .select_for_post(&p.post_id, &p.post_text, args.n)
            .await
            .with_context(|| format!("selecting for post {}", p.post_id))?;
        out.push(SelectResponse {
            post_id: d.post_id,
            subject: d.chosen.text,
            source: d.source,
            score: d.score,
            cached: d.cached,
            generator_version: d.generator_version,
        });
    }
    write_lines(cli.out.as_deref(), &out)
}

async fn run_serve(cli: &Cli) -> Result<()> {
    let config: ServiceConfig = match &cli.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    serve(&config).await?;
    Ok(())
}

async fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    if args.drift {
        let mut config: DriftConfig = load_config(cli.config.as_deref())?;
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        let report = run_drift_scenario(&config)?;
        return write_json(cli.out.as_deref(), &report);
    }
    let mut config: SimConfig = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let outcome = run_end_to_end(&config).await?;
    if let Some(dir) = &args.artifacts {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let logs_path = dir.join("logs.csv");
        let f = File::create(&logs_path).with_context(|| format!("creating {}", logs_path.display()))?;
        write_logs(BufWriter::new(f), &outcome.logs)?;
        write_lines(Some(&dir.join("catalog.jsonl")), &outcome.catalog)?;
        write_lines(Some(&dir.join("pairs.jsonl")), &outcome.pairs)?;
        outcome.params.save(&dir.join("params.json"))?;
    }
    write_json(cli.out.as_deref(), &outcome.report)
}

fn monitor(cli: &Cli, args: &MonitorArgs) -> Result<()> {
    let mut settings: MonitorSettings = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        settings.train.seed = seed;
    }
    let params = load_params(&args.params)?;
    let fresh: Vec<PreferencePair> = read_records(&args.fresh)?;
    let training: Vec<PreferencePair> = read_records(&args.training)?;
    let holdout: Vec<PreferencePair> = read_records(&args.holdout)?;
    let mut baseline = if args.baseline.exists() {
        let text =
            std::fs::read_to_string(&args.baseline).with_context(|| format!("reading {}", args.baseline.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.baseline.display()))?
    } else {
        let accuracy = evaluate_accuracy(&params, &holdout)?;
        MonitorBaseline {
            min_sample: settings.min_sample,
            ..MonitorBaseline::new(accuracy, args.day)
        }
    };
    let handle = ParamsHandle::new(params);
    let report = run_day(
        &handle,
        &fresh,
        &training,
        &holdout,
        &mut baseline,
        &settings.train,
        args.day,
        settings.threshold,
    )?;
    if report.swap.as_ref().is_some_and(|s| s.swapped) {
        let mut prev = args.params.clone().into_os_string();
        prev.push(".prev");
        std::fs::copy(&args.params, &prev).with_context(|| format!("backing up {}", args.params.display()))?;
        handle
            .load()
            .save(&args.params)
            .with_context(|| format!("writing {}", args.params.display()))?;
    }
    write_json(Some(&args.baseline), &baseline)?;
    match &cli.out {
        Some(path) => append_report(path, &report)?,
        None => println!("{}", serde_json::to_string(&report)?),
    }
    if report.alert {
        eprintln!("alert: retraining did not beat the incumbent on the holdout");
    }
    Ok(())
}

fn export(cli: &Cli, args: &ExportSftArgs) -> Result<()> {
    let pairs: Vec<PreferencePair> = read_records(&args.pairs)?;
    write_lines(cli.out.as_deref(), &export_sft(&pairs))
}

/// The error chain joined by ": ", skipping causes an outer message already
/// quotes.
fn render_error(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

async fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(cli, a),
        Command::Label(a) => label(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Select(a) => select(cli, a).await,
        Command::Serve => run_serve(cli).await,
        Command::Simulate(a) => simulate(cli, a).await,
        Command::Monitor(a) => monitor(cli, a),
        Command::ExportSft(a) => export(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        _ => LevelFilter::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .init();

    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(1)
        }
    }
}
