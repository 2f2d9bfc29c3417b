use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use expecta_cli::{pipeline, report, CliError, CliResult, Profile, RunConfig, RunDir};

#[derive(Parser)]
#[command(name = "expecta", version, about = "Expectation audit for image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use this run directory instead of the newest one matching the config.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.epochs=2`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the collected, validation and test sets.
    Gen(Common),
    /// Train every configured architecture.
    Train(Common),
    /// Calibrate the score temperature on the test set.
    Calibrate(Common),
    /// Score the test set and evaluate the detector.
    Score(Common),
    /// Shapley attribution of scores.
    Attribute(Common),
    /// Run every stage in a fresh run directory.
    Audit(Common),
    /// Build report.json and figures.
    Report(Common),
    /// Compare vanilla, batch-norm and dropout variants.
    ExperimentRegularization(Common),
}

fn run(cmd: Command) -> CliResult<()> {
    let (common, stage) = match &cmd {
        Command::Gen(c) => (c, "gen"),
        Command::Train(c) => (c, "train"),
        Command::Calibrate(c) => (c, "calibrate"),
        Command::Score(c) => (c, "score"),
        Command::Attribute(c) => (c, "attribute"),
        Command::Audit(c) => (c, "audit"),
        Command::Report(c) => (c, "report"),
        Command::ExperimentRegularization(c) => (c, "experiment-regularization"),
    };
    let threads = expecta_cli::init_threads()?;
    let cfg = RunConfig::resolve(
        common.config.as_deref(),
        common.profile,
        common.seed,
        common.out.as_deref(),
        &common.set,
    )?;
    log::info!("{stage}: profile {:?}, seed {}, {threads} thread(s)", cfg.profile, cfg.seed);
    if stage == "audit" {
        let (dir, report) = expecta_cli::audit(&cfg)?;
        println!("{}", dir.root.display());
        println!("auroc {:?}  t_star {:.2}", report.auroc, report.t_star);
        return Ok(());
    }
    if stage == "experiment-regularization" {
        pipeline::check_regularization_profile(&cfg)?;
    }
    let dir = if stage == "gen" {
        RunDir::locate_or_create(&cfg, common.run.as_deref())?
    } else {
        RunDir::locate(&cfg, common.run.as_deref())?
    };
    match stage {
        "gen" => pipeline::gen(&cfg, &dir)?,
        "train" => drop(pipeline::train(&cfg, &dir)?),
        "calibrate" => pipeline::calibrate(&cfg, &dir)?,
        "score" => drop(pipeline::score(&cfg, &dir)?),
        "attribute" => drop(pipeline::attribute(&cfg, &dir)?),
        "report" => drop(report::report(&cfg, &dir)?),
        _ => drop(pipeline::experiment_regularization(&cfg, &dir)?),
    }
    println!("{}", dir.root.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code: CliError = e;
            ExitCode::from(code.exit_code() as u8)
        }
    }
}
