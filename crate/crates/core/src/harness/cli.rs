//! Command-line interface.
//!
//! Subcommands: `train` (run an experiment and write its artifacts),
//! `eval` (replay a trained checkpoint greedily on a map), `plot`
//! (regenerate the SVGs of a finished run), and `dpp-bench` (greedy vs
//! exhaustive MAP selection: agreement and timing on planted kernels).

use super::config::ExperimentConfig;
use super::report::{
    self, emit_report, parse_metrics_csv, parse_path_json, METRICS_FILE, PATH_FILE,
};
use super::run::{greedy_rollout, load_map_source, run_experiment_with_network};
use super::HarnessError;
use crate::env::path_metrics;
use crate::kernel::{brute_force_map, greedy_map_select, synthetic};
use crate::qnet::QNetwork;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Parser, Debug)]
#[command(
    name = "dpp-replay",
    about = "Diversity-aware experience replay on 2D maze navigation",
    version
)]
struct Cli {
    /// Root random seed (overrides the config file's seed for `train`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one algorithm variant and write metrics, plots, and a checkpoint.
    Train(TrainArgs),
    /// Run a trained checkpoint greedily on a map and print the path.
    Eval(EvalArgs),
    /// Regenerate the SVG plots of a finished run directory.
    Plot(PlotArgs),
    /// Greedy-vs-oracle subset agreement and timing on planted kernels.
    DppBench(DppBenchArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Experiment config file (flat key = value format).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Network checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Builtin map name or map file path.
    #[arg(long)]
    map: String,
    /// Step cap for the greedy episode.
    #[arg(long, default_value_t = 256)]
    steps: usize,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Run directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args, Debug)]
struct DppBenchArgs {
    /// Candidate count per trial.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Subset size per trial.
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Number of planted instances.
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

/// Parse and dispatch; returns the process exit code. Usage errors print the
/// usage text and return 2; runtime failures print a message and return 1.
pub fn cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(p) => p,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match parsed.command {
        Command::Train(args) => train(args, parsed.seed),
        Command::Eval(args) => eval(args),
        Command::Plot(args) => plot(args),
        Command::DppBench(args) => dpp_bench(args, parsed.seed.unwrap_or(0)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn train(args: TrainArgs, seed_override: Option<u64>) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| HarnessError::Io(format!("config '{}': {e}", args.config.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let map = load_map_source(&config.map)?;
    let (report, network) = run_experiment_with_network(&config)?;
    emit_report(&report, &map, &args.out)?;
    std::fs::write(args.out.join(CONFIG_FILE), config.to_text())
        .map_err(|e| HarnessError::Io(format!("write config echo: {e}")))?;
    network
        .save_checkpoint(&args.out.join(CHECKPOINT_FILE))
        .map_err(HarnessError::QNet)?;
    println!(
        "trained {} on {} (seed {}): convergence rate {:.3}, first reached at epoch {}",
        config.algorithm.as_str(),
        config.map,
        config.seed,
        report.convergence_rate,
        report.first_epoch_at_rate
    );
    match (report.best_path_length, report.best_path_turns) {
        (Some(length), Some(turns)) => {
            println!("greedy path: length {length}, turns {turns}")
        }
        _ => println!("greedy path: goal not reached"),
    }
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), HarnessError> {
    let network = QNetwork::load_checkpoint(&args.checkpoint).map_err(HarnessError::QNet)?;
    let map = load_map_source(&args.map)?;
    match greedy_rollout(&map, &network, args.steps) {
        Some(path) => {
            let (length, turns) = path_metrics(&path)?;
            println!("{}", report::path_json(&Some(path)));
            println!("goal reached: length {length}, turns {turns}");
        }
        None => println!("goal not reached within {} steps", args.steps),
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<(), HarnessError> {
    let read = |name: &str| -> Result<String, HarnessError> {
        let path = args.run.join(name);
        std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::Io(format!("read {}: {e}", path.display())))
    };
    let config = ExperimentConfig::parse(&read(CONFIG_FILE)?)?;
    let map = load_map_source(&config.map)?;
    let epochs = parse_metrics_csv(&read(METRICS_FILE)?)?;
    let path = parse_path_json(&read(PATH_FILE)?)?;
    if epochs.is_empty() {
        return Err(HarnessError::Io("run has no recorded epochs".into()));
    }
    std::fs::write(
        args.run.join(report::SUCCESS_SVG),
        report::success_curve_svg(&epochs),
    )
    .map_err(|e| HarnessError::Io(format!("write success curve: {e}")))?;
    std::fs::write(
        args.run.join(report::OVERLAY_SVG),
        report::path_overlay_svg(&map, &path),
    )
    .map_err(|e| HarnessError::Io(format!("write overlay: {e}")))?;
    println!("plots regenerated in {}", args.run.display());
    Ok(())
}

fn dpp_bench(args: DppBenchArgs, seed: u64) -> Result<(), HarnessError> {
    if args.m < 2 || args.m > args.n {
        return Err(HarnessError::Config(format!(
            "need 2 <= m <= n, got m={} n={}",
            args.m, args.n
        )));
    }
    if args.trials == 0 {
        return Err(HarnessError::Config("trials must be positive".into()));
    }
    let mut agree = 0usize;
    let mut greedy_time = std::time::Duration::ZERO;
    let mut oracle_time = std::time::Duration::ZERO;
    for trial in 0..args.trials {
        let instance = synthetic::planted_instance(args.n, args.m, seed + trial as u64);

        let begin = Instant::now();
        let mut greedy = greedy_map_select(&instance.kernel, args.m)?;
        greedy_time += begin.elapsed();
        greedy.sort_unstable();

        let begin = Instant::now();
        let oracle = brute_force_map(&instance.kernel, args.m)?;
        oracle_time += begin.elapsed();

        if greedy == oracle {
            agree += 1;
        }
    }
    println!("dpp-bench: n={} m={} trials={}", args.n, args.m, args.trials);
    println!(
        "agreement: {}/{} ({:.1}%)",
        agree,
        args.trials,
        100.0 * agree as f64 / args.trials as f64
    );
    println!(
        "greedy total: {:.3} ms, oracle total: {:.3} ms",
        greedy_time.as_secs_f64() * 1e3,
        oracle_time.as_secs_f64() * 1e3
    );
    Ok(())
}
