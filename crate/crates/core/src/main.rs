use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ngdlab::cli::{describe, RawConfig, RunError, Scenario, ScenarioKind};

#[derive(Parser)]
#[command(
    name = "ngdlab",
    version,
    about = "Negative group delay and causal feedback loop simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pulse through the amplifier without feedback; measures the group delay.
    OpenLoop(RunArgs),
    /// Threshold-triggered feedback loop; solves for the self-consistent signal.
    Feedback(RunArgs),
    /// Detector bank with decreasing thresholds; extrapolates the front.
    Sweep(RunArgs),
    /// Gain calibration from the nominal group advance.
    Calibrate(RunArgs),
    /// Kramers-Kronig consistency of the transfer function.
    KkCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV traces and summary.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation span `start,end` in seconds.
    #[arg(long, allow_hyphen_values = true)]
    span: Option<String>,
}

fn run(kind: ScenarioKind, args: RunArgs) -> Result<(), RunError> {
    let mut raw = match &args.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for assignment in &args.set {
        raw.set(assignment)?;
    }
    if let Some(dt) = args.dt {
        raw.set(&format!("dt={dt}"))?;
    }
    if let Some(span) = &args.span {
        raw.set(&format!("span={span}"))?;
    }
    let scenario = Scenario::new(kind, raw.resolve()?, args.out);
    let summary = scenario.run()?;
    for line in describe(&summary) {
        println!("{line}");
    }
    println!(
        "summary         {}",
        scenario.output_dir.join("summary.json").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::OpenLoop(a) => (ScenarioKind::OpenLoop, a),
        Command::Feedback(a) => (ScenarioKind::Feedback, a),
        Command::Sweep(a) => (ScenarioKind::ThresholdSweep, a),
        Command::Calibrate(a) => (ScenarioKind::Calibrate, a),
        Command::KkCheck(a) => (ScenarioKind::KkCheck, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
