//! `seedscale`: run seed-by-scale sweeps and turn their records into tables.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seedscale::analysis::BootstrapSettings;
use seedscale::experiment::{
    dump_examples, lint_records, load_records_repairing, parse_seed_range, records_path, run_sweep, write_analysis,
    AnalysisSpec, CellStatus, SweepConfig, SweepEvent, SweepOptions,
};
use seedscale::gradcheck::run_default_suite;
use seedscale::tasks::TaskKind;

#[derive(Parser)]
#[command(name = "seedscale", version, about = "Seed-population training sweeps and distributional scaling analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (scale, seed) cell of a sweep file.
    Sweep(SweepArgs),
    /// Write curve, KDE, histogram, bimodality and seed-ranking tables.
    Analyze(AnalyzeArgs),
    /// Task utilities.
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Initialization seeds to check.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Lint a run-record file against the record schema.
    Validate {
        /// A records JSONL file or a sweep output directory.
        #[arg(long)]
        records: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the one in the config file.
    #[arg(long, env = "SEEDSCALE_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    max_parallel: Option<usize>,
    /// Continue a partially completed sweep in the output directory.
    #[arg(long)]
    resume: bool,
    /// Seeds to run instead of the config's, as `a..b` or `a..=b`.
    #[arg(long)]
    seed_range: Option<String>,
    /// Evaluate every this many steps as well as at the end.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Stop handing out runs after this many finish.
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// A records JSONL file or a sweep output directory.
    #[arg(long)]
    records: PathBuf,
    /// Directory for the CSV tables; defaults to `<records dir>/analysis`.
    #[arg(long, env = "SEEDSCALE_OUT")]
    out: Option<PathBuf>,
    /// Exact-match success threshold; defaults to the task's.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
}

#[derive(Subcommand)]
enum TasksCommand {
    /// Print sampled examples, one per line.
    Dump {
        #[arg(long)]
        task: TaskKind,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Longest addition length the hint vocabulary must cover.
        #[arg(long)]
        max_eval_length: Option<usize>,
    },
}

fn records_file(path: PathBuf) -> PathBuf {
    if path.is_dir() {
        records_path(&path)
    } else {
        path
    }
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut config = SweepConfig::load(&args.config)?;
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(n) = args.max_parallel {
        if n == 0 {
            bail!("--max-parallel must be positive");
        }
        config.max_parallel = n;
    }
    if let Some(range) = &args.seed_range {
        config = config.with_seeds(parse_seed_range(range)?)?;
    }
    if args.eval_every.is_some() {
        config = config.with_eval_every(args.eval_every)?;
    }
    let options = SweepOptions {
        resume: args.resume,
        stop_after: args.stop_after,
    };
    eprintln!(
        "sweep {}: {} scales x {} seeds into {}",
        config.name,
        config.scale_points.len(),
        config.seeds.len(),
        config.output_dir.display()
    );
    let summary = run_sweep(&config, &options, &mut |event| match event {
        SweepEvent::Started { scale_label, seed } => eprintln!("start  {scale_label} seed {seed}"),
        SweepEvent::Finished {
            scale_label,
            seed,
            status,
            detail,
        } => {
            let tag = if *status == CellStatus::Done { "done  " } else { "FAILED" };
            eprintln!("{tag} {scale_label} seed {seed}: {detail}");
        }
    })?;
    eprintln!(
        "executed {} (skipped {}); done {}, failed {}, pending {}",
        summary.executed, summary.skipped, summary.done, summary.failed, summary.pending
    );
    Ok(ExitCode::SUCCESS)
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let path = records_file(args.records);
    let records = load_records_repairing(&path)?;
    if records.is_empty() {
        bail!("{} holds no records", path.display());
    }
    let out = args
        .out
        .unwrap_or_else(|| path.parent().map(|p| p.join("analysis")).unwrap_or_else(|| "analysis".into()));
    let spec = AnalysisSpec {
        threshold: args.threshold,
        bootstrap: BootstrapSettings {
            n_resamples: args.resamples,
            seed: args.bootstrap_seed,
            ..BootstrapSettings::default()
        },
        ..AnalysisSpec::default()
    };
    let report = write_analysis(&records, &spec, &out)?;
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(seeds: &[u64]) -> Result<ExitCode> {
    let reports = run_default_suite(seeds)?;
    let mut ok = true;
    for (seed, report) in seeds.iter().zip(&reports) {
        for t in &report.tensors {
            println!(
                "seed {seed} {:<16} entries {:>5} failures {:>3} max_rel {:.3e} max_abs {:.3e}",
                t.name, t.entries, t.failures, t.max_rel_error, t.max_abs_error
            );
        }
        ok &= report.passed();
    }
    println!("{}", if ok { "gradcheck passed" } else { "gradcheck FAILED" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn validate(path: PathBuf) -> Result<ExitCode> {
    let path = records_file(path);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let report = lint_records(BufReader::new(file))?;
    for (line, problem) in &report.problems {
        println!("{}:{line}: {problem}", path.display());
    }
    println!("{} records, {} problems", report.records, report.problems.len());
    Ok(if report.is_clean() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Sweep(args) => sweep(args),
        Command::Analyze(args) => analyze(args),
        Command::Tasks {
            command:
                TasksCommand::Dump {
                    task,
                    n,
                    length,
                    seed,
                    max_eval_length,
                },
        } => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for line in dump_examples(task, n, length, seed, max_eval_length)? {
                writeln!(out, "{line}")?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seeds } => gradcheck(&seeds),
        Command::Validate { records } => validate(records),
    }
}
