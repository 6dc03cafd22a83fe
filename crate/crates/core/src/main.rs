use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corpusforge::pipeline::{
    continuation, discover_inputs, read_manifest, report_stats, run_all, run_stage, Config,
    PipelineError, Run, RunOptions, Stage, StageOutcome, MANIFEST_FILE,
};
use corpusforge::synth::{write_fixture_corpus, FixtureSpec};

#[derive(Parser)]
#[command(name = "corpusforge", version, about = "Build a deduplicated Japanese corpus from WARC archives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read WARC archives into raw documents.
    Ingest(StageArgs),
    /// Convert raw documents to Markdown.
    Convert(StageArgs),
    /// Apply the quality filter.
    Filter(StageArgs),
    /// Remove near-duplicates across all dumps.
    Dedup(StageArgs),
    /// Pack survivors into checksummed shards.
    Shard(StageArgs),
    /// Plan and sample a token mixture from shards.
    Mix(StageArgs),
    /// Run every stage in order, resuming where a previous run stopped.
    Run(StageArgs),
    /// Print the funnel report of a run.
    Report(ReportArgs),
    /// Write a synthetic multi-dump WARC corpus for trying the pipeline.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Continue an existing run instead of starting a new one.
    #[arg(long, value_name = "RUN_ID")]
    resume: Option<String>,
    /// Id for a new run (default: timestamp plus config hash prefix).
    #[arg(long, conflicts_with = "resume")]
    run_id: Option<String>,
    /// Dump label for an input directory that holds archives directly.
    #[arg(long)]
    dump_label: Option<String>,
    /// Directory of archives, or of one subdirectory per dump.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Root directory for runs.
    #[arg(long, default_value = "runs")]
    output: PathBuf,
    /// Stop after this many work units.
    #[arg(long, hide = true)]
    max_units: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    run_id: String,
    #[arg(long, default_value = "runs")]
    output: PathBuf,
    /// Also write the funnel as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 3)]
    dumps: usize,
    #[arg(long, default_value_t = 2)]
    files: usize,
    #[arg(long, default_value_t = 90)]
    pages: usize,
    #[arg(long, default_value_t = 8)]
    near_duplicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn open_or_create(args: &StageArgs, needs_input: bool) -> Result<Run, PipelineError> {
    let config = Config::load(&args.config)?;
    let run = match &args.resume {
        Some(id) => Run::open(&args.output, id, config)?,
        None => Run::create(&args.output, args.run_id.as_deref(), config)?,
    };
    match &args.input {
        Some(dir) if needs_input => run.add_inputs(discover_inputs(dir, args.dump_label.as_deref())?)?,
        Some(_) => log::warn!("--input is only used by ingest and run"),
        None => {}
    }
    Ok(run)
}

fn print_outcome(stage: Stage, outcome: &StageOutcome) {
    match outcome {
        StageOutcome::Completed(_) if stage == Stage::Report => println!("report: written"),
        StageOutcome::Completed(c) => {
            let drops: Vec<String> = c.drops.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!(
                "{stage}: done, {} in, {} out{}{}",
                c.docs_in,
                c.docs_out,
                if drops.is_empty() { "" } else { ", dropped " },
                drops.join(" ")
            );
        }
        StageOutcome::Skipped => println!("{stage}: skipped"),
        StageOutcome::Interrupted { done, remaining } => {
            println!("{stage}: stopped with {done} units done, {remaining} remaining")
        }
    }
}

fn stage_command(stage: Option<Stage>, args: &StageArgs) -> Result<(), PipelineError> {
    let needs_input = matches!(stage, None | Some(Stage::Ingest));
    let run = open_or_create(args, needs_input)?;
    println!("run {}", run.id());
    let opts = RunOptions {
        workers: args.workers.max(1),
        max_units: args.max_units,
    };
    match stage {
        Some(stage) => print_outcome(stage, &run_stage(&run, stage, &opts)?),
        None => {
            for (stage, outcome) in run_all(&run, &opts)? {
                print_outcome(stage, &outcome);
            }
        }
    }
    let cont = continuation(&run);
    if let Some(next) = cont.stage {
        println!("next: {next} ({} units pending)", cont.units.len());
    }
    Ok(())
}

fn report_command(args: &ReportArgs) -> Result<(), PipelineError> {
    let path = args.output.join(&args.run_id).join(MANIFEST_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingInput(format!("{} not found", path.display())));
    }
    let report = report_stats(&read_manifest(&path)?);
    print!("{}", report.to_text());
    if let Some(csv) = &args.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        std::fs::write(csv, buf)?;
    }
    Ok(())
}

fn synth_command(args: &SynthArgs) -> Result<(), PipelineError> {
    let spec = FixtureSpec {
        dumps: (0..args.dumps).map(|i| format!("CC-MAIN-2019-{:02}", 4 + 5 * i)).collect(),
        files_per_dump: args.files,
        pages_per_file: args.pages,
        near_duplicates: if args.dumps > 1 { args.near_duplicates } else { 0 },
        seed: args.seed,
    };
    let summary = write_fixture_corpus(Path::new(&args.output), &spec)?;
    println!(
        "wrote {} archives, {} records, {} planted near-duplicates under {}",
        summary.archives.len(),
        summary.records,
        summary.planted_duplicates,
        args.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => stage_command(Some(Stage::Ingest), a),
        Command::Convert(a) => stage_command(Some(Stage::Convert), a),
        Command::Filter(a) => stage_command(Some(Stage::Filter), a),
        Command::Dedup(a) => stage_command(Some(Stage::Dedup), a),
        Command::Shard(a) => stage_command(Some(Stage::Shard), a),
        Command::Mix(a) => stage_command(Some(Stage::Mix), a),
        Command::Run(a) => stage_command(None, a),
        Command::Report(a) => report_command(a),
        Command::Synth(a) => synth_command(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
