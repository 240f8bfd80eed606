use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qgen::config::{ExperimentConfig, Overrides};
use qgen::pipeline::{self, RunLock, StdObserver};
use qgen::{Error, Result};
use qgen_core::training::TrainMode;

#[derive(Parser)]
#[command(name = "qgen", version, about = "Answer-aware question generation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Create a run directory, split the data and build the vocabulary.
    Prepare(FromConfig),
    /// Write relevance labels for a prepared run.
    Label(InRun),
    /// Train and save the checkpoint.
    Train(InRun),
    /// Decode the evaluation split with the saved checkpoint.
    Generate(InRun),
    /// Score predictions and write report.json.
    Evaluate(InRun),
    /// Every stage in a fresh run directory.
    Run(FromConfig),
    /// One run per top-k value; writes sweep_k.csv.
    SweepK(FromConfig),
    /// Runs each training mode on the same data and seed; writes compare_modes.csv.
    CompareModes {
        #[command(flatten)]
        from: FromConfig,
        /// Comma-separated modes.
        #[arg(long, default_value = "joint,two_step")]
        modes: String,
    },
}

#[derive(Args)]
struct FromConfig {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct InRun {
    /// Run directory created by `prepare`.
    #[arg(long)]
    run: PathBuf,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated, e.g. 1,2,3,4,5.
    #[arg(long)]
    k_list: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Result<Overrides> {
        let k_list = match &self.k_list {
            Some(s) => Some(parse_list(s, |v| v.parse::<usize>().ok())?),
            None => None,
        };
        Ok(Overrides {
            seed: self.seed,
            mode: self.mode.clone(),
            k: self.k,
            k_list,
            lambda: self.lambda,
            beam: self.beam,
            backend: self.backend.clone(),
            out: self.out.clone(),
        })
    }

    fn is_empty(&self) -> bool {
        self.seed.is_none()
            && self.mode.is_none()
            && self.k.is_none()
            && self.k_list.is_none()
            && self.lambda.is_none()
            && self.beam.is_none()
            && self.backend.is_none()
            && self.out.is_none()
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| f(v).ok_or_else(|| Error::Config(format!("bad list entry {v:?}"))))
        .collect()
}

fn from_config(args: &FromConfig) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    config.apply(&args.flags.overrides()?)?;
    Ok(config)
}

/// Loads a run's config; flags given on the command line are applied and
/// written back so later stages and the report see them.
fn in_run(args: &InRun) -> Result<ExperimentConfig> {
    let mut config = pipeline::load_run_config(&args.run)?;
    if !args.flags.is_empty() {
        config.apply(&args.flags.overrides()?)?;
        pipeline::save_run_config(&config, &args.run)?;
    }
    Ok(config)
}

fn print_scores(dir: &Path, report: &pipeline::Report) {
    println!("run: {}", dir.display());
    println!(
        "n={} bleu4={:.4} rouge_l={:.4} meteor_lite={:.4}",
        report.n_examples, report.bleu4, report.rouge_l, report.meteor_lite
    );
}

fn execute(cli: Cli) -> Result<()> {
    let mut observer = StdObserver::new(!cli.quiet);
    match cli.command {
        Command::Prepare(args) => {
            let config = from_config(&args)?;
            pipeline::check_paths(&config)?;
            let dir = pipeline::create_run_dir(&config, "")?;
            let _lock = RunLock::acquire(&dir)?;
            let s = pipeline::prepare(&config, &dir)?;
            println!("{}", dir.display());
            eprintln!("train={} test={} dropped={}", s.n_train, s.n_test, s.dropped.len());
        }
        Command::Label(args) => {
            let config = in_run(&args)?;
            let _lock = RunLock::acquire(&args.run)?;
            let labels = pipeline::label(&config, &args.run)?;
            eprintln!("labeled {} examples", labels.len());
        }
        Command::Train(args) => {
            let config = in_run(&args)?;
            let _lock = RunLock::acquire(&args.run)?;
            let s = pipeline::train(&config, &args.run, &mut observer)?;
            eprintln!("{} optimizer steps", s.steps);
        }
        Command::Generate(args) => {
            let config = in_run(&args)?;
            let _lock = RunLock::acquire(&args.run)?;
            let p = pipeline::generate(&config, &args.run)?;
            eprintln!("{} predictions", p.len());
        }
        Command::Evaluate(args) => {
            let config = in_run(&args)?;
            let _lock = RunLock::acquire(&args.run)?;
            let report = pipeline::evaluate(&config, &args.run)?;
            print_scores(&args.run, &report);
        }
        Command::Run(args) => {
            let config = from_config(&args)?;
            let run = pipeline::run_pipeline(&config, &mut observer)?;
            print_scores(&run.dir, &run.report);
        }
        Command::SweepK(args) => {
            let config = from_config(&args)?;
            let out = pipeline::sweep_top_k(&config, &config.sweep.k_list, &mut observer)?;
            println!("{}", out.dir.join(pipeline::SWEEP_CSV).display());
            for (k, e) in &out.errors {
                eprintln!("k={k} failed: {e}");
            }
        }
        Command::CompareModes { from, modes } => {
            let config = from_config(&from)?;
            let modes = parse_list(&modes, TrainMode::parse)?;
            let out = pipeline::compare_modes(&config, &modes, &mut observer)?;
            println!("{}", out.dir.join(pipeline::COMPARE_CSV).display());
            for (m, e) in &out.errors {
                eprintln!("{} failed: {e}", m.as_str());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
