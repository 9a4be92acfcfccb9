use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use rtcal::calibrate::{calibrate, CalibrationResult, Scheme};
use rtcal::channel::ChannelDataset;
use rtcal::harness::{aggregate, aggregate_to_csv, cell_dataset, rows_to_csv, run_experiment, write_file, ExperimentConfig};
use rtcal::raytracer::{trace_paths, DevicePair, Point, Scene, TraceOptions};
use rtcal::{Error, Result};

#[derive(Parser)]
#[command(name = "rtcal", version, about = "Ray-tracing material calibration workbench")]
struct Cli {
    /// Overrides the seed list of the config with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace a scene and dump the path set as JSON.
    Trace {
        scene: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        tx: Point,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        rx: Point,
        #[arg(long, default_value_t = 3)]
        max_bounces: usize,
        #[arg(long)]
        no_los: bool,
        #[arg(long, default_value_t = 5.996e9)]
        carrier_hz: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Synthesize the dataset of one sweep cell.
    Synth {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Sweep value (default: the first grid value).
        #[arg(long)]
        value: Option<f64>,
    },
    /// Calibrate the DT scene of a config against a dataset.
    Calibrate {
        config: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        scheme: Scheme,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the full sweep and write per-run and aggregated CSVs.
    Run {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        aggregate: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y] => Ok([x, y]),
        _ => Err(format!("expected x,y, got {s:?}")),
    }
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    result: CalibrationResult,
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Trace { scene, tx, rx, max_bounces, no_los, carrier_hz, output } => {
            let scene = Scene::load(&scene)?;
            let pair = DevicePair::new(rx, tx)?;
            let opts = TraceOptions { max_bounces, include_los: !no_los };
            let set = trace_paths(&scene, pair, &opts, carrier_hz)?;
            let bytes = to_json(&set)?;
            match output {
                Some(p) => write_file(p, &bytes),
                None => {
                    print!("{}", String::from_utf8_lossy(&bytes));
                    Ok(())
                }
            }
        }
        Command::Synth { config, output, value } => {
            let cfg = load_config(&config, cli.seed)?;
            let (truth, _) = cfg.load_scenes()?;
            let ds = cell_dataset(&cfg, &truth, value.unwrap_or(cfg.sweep.values[0]), cfg.seeds[0])?;
            ds.save(output)
        }
        Command::Calibrate { config, dataset, scheme, output } => {
            let cfg = load_config(&config, cli.seed)?;
            let (_, dt) = cfg.load_scenes()?;
            let ds = ChannelDataset::load(&dataset)?;
            let mut optim = cfg.optim.clone();
            optim.seed = cfg.seeds[0];
            let result = calibrate(scheme, &dt, &cfg.trace, &ds, &optim)?;
            write_file(output, &to_json(&Report { config: &cfg, seed: optim.seed, result })?)
        }
        Command::Run { config, output, aggregate: agg_path } => {
            let cfg = load_config(&config, cli.seed)?;
            let rows = run_experiment(&cfg)?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                log::warn!("{failed} of {} runs failed; see the error column", rows.len());
            }
            write_file(&output, &rows_to_csv(&rows)?)?;
            if let Some(p) = agg_path {
                write_file(p, &aggregate_to_csv(&aggregate(&rows)?)?)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
