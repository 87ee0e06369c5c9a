use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ffd_core::harness::{
    preset, replay_to, run_scenario, scenario_preset, ReplayOptions, RunManifest, RunOptions, Scenario,
    ScenarioConfig, FULL_SHOT_FACTOR,
};
use ffd_core::{Error, FieldError, Result};

/// Feedforward-decoupling simulator: run a scenario or replay a record file.
#[derive(Debug, Parser)]
#[command(name = "ffd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fixed τ, swept pulse duration; fits Δ₀ from signal vs measured area.
    Calibrate(RunArgs),
    /// Random pulse durations; quadrant post-selection vs uncorrected decay.
    Quadrant(RunArgs),
    /// Δ₀ and the echo envelope learned from the records alone.
    SelfLearn(RunArgs),
    /// Continuous phase correction of a large noisy pulse.
    Benchmark(RunArgs),
    /// ADC quantization floor over a (bits, samples per π) grid.
    Floor(RunArgs),
    /// Re-analyze a shots.jsonl file without simulating.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario config as JSON.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config; defaults to the one named after the subcommand.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shots per sweep point.
    #[arg(long)]
    shots: Option<u64>,
    /// Output directory [default: ffd-out/<scenario>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tenfold shot count.
    #[arg(long)]
    full: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Record file written by a run.
    records: PathBuf,
    /// Output directory [default: <records dir>/replay].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Δ₀ used to convert measured areas to phases.
    #[arg(long)]
    delta0: Option<f64>,
    /// Post-selection half width around each quadrant center, in rad.
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    phase_bins: Option<usize>,
    #[arg(long = "area-bin-width")]
    area_bin_width_ma_us: Option<f64>,
}

fn resolve_config(scenario: Scenario, args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => scenario_preset(scenario),
    };
    if cfg.scenario != scenario {
        return Err(Error::Config(vec![FieldError::new(
            "scenario",
            format!("config is for {} but the subcommand is {scenario}", cfg.scenario),
        )]));
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    match args.shots {
        Some(n) => cfg.shots_per_point = n,
        None if args.full => cfg.shots_per_point *= FULL_SHOT_FACTOR,
        None => {}
    }
    Ok(cfg)
}

fn print_manifest(dir: &Path, m: &RunManifest) {
    println!("scenario      {}", m.scenario);
    println!("config digest {}", m.config_digest);
    println!("records       {}", m.n_records);
    for (k, v) in &m.summary {
        println!("{k:<32} {v}");
    }
    println!("wrote {} files to {}", m.outputs.len() + 1, dir.display());
}

fn run(cli: Cli) -> Result<()> {
    let (scenario, args) = match cli.command {
        Command::Calibrate(a) => (Scenario::Calibrate, a),
        Command::Quadrant(a) => (Scenario::Quadrant, a),
        Command::SelfLearn(a) => (Scenario::SelfLearn, a),
        Command::Benchmark(a) => (Scenario::Benchmark, a),
        Command::Floor(a) => (Scenario::Floor, a),
        Command::Replay(r) => {
            let out = r.out.clone().unwrap_or_else(|| {
                r.records
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join("replay")
            });
            let opts = ReplayOptions {
                delta0: r.delta0,
                postselect_half_width_rad: r.half_width,
                phase_bins: r.phase_bins,
                area_bin_width_ma_us: r.area_bin_width_ma_us,
            };
            let m = replay_to(&r.records, &out, &opts)?;
            print_manifest(&out, &m);
            return Ok(());
        }
    };
    let cfg = resolve_config(scenario, &args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("ffd-out").join(scenario.cli_name()));
    let m = run_scenario(&cfg, &out, &RunOptions { workers: args.workers })?;
    print_manifest(&out, &m);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
