use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cellsense::bench::{
    evaluate_technique, make_localizer, sweep, write_cdf_csv, write_reports, write_reports_csv, write_sweep,
    EvalOptions, Scenario, SweepConfig, SweepParam,
};
use cellsense::estimators::{EstimatorParams, ScanWindow, Technique};
use cellsense::gp::{gp_grid_for_map, load_gp_grid, save_gp_grid, GpConfig, PrecomputedGrid};
use cellsense::radio_map::{build_radio_map, load_radio_map, save_radio_map};
use cellsense::synth::make_preset;
use cellsense::trace::{read_towers, read_trace, write_towers, write_trace};
use cellsense::{RadioMap, ScanVector};

#[derive(Parser)]
#[command(name = "cellsense", version, about = "GSM RSSI fingerprinting: synthesize, build, locate, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world: train.csv, test.csv and towers.csv.
    Synth {
        #[arg(long, default_value = "rural")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a radio map from one or more trace files.
    Build {
        #[arg(long, required = true, num_args = 1..)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value_t = 70.0)]
        grid_length: f64,
        /// Tower locations (tower_id,lat,lon), needed by cellid.
        #[arg(long)]
        towers: Option<PathBuf>,
        /// Keep only the histograms; hybrid and gp will refuse such a map.
        #[arg(long)]
        strip_points: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute the GP likelihood grid for a map.
    GpGrid {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 1019)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a position for every scan of a trace.
    Locate {
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long)]
        scans: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a technique on a trace with ground truth.
    Evaluate {
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long)]
        scans: PathBuf,
        /// Fail when a scan lacks ground truth instead of skipping it.
        #[arg(long)]
        truth_required: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the error CDF here.
        #[arg(long)]
        cdf: Option<PathBuf>,
    },
    /// Re-run one technique over a list of parameter values.
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, required = true, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, default_value = "cellsense")]
        technique: String,
        /// Synthetic preset to sweep on, unless --train/--test are given.
        #[arg(long, default_value = "rural")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, requires = "test")]
        train: Option<PathBuf>,
        #[arg(long, requires = "train")]
        test: Option<PathBuf>,
        #[arg(long)]
        towers: Option<PathBuf>,
        #[arg(long, default_value_t = 70.0)]
        grid_length: f64,
        #[arg(long)]
        ns: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1019)]
        gp_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long, default_value = "cellsense")]
    technique: String,
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Precomputed GP grid; built from the map when omitted.
    #[arg(long)]
    gp_grid: Option<PathBuf>,
    #[arg(long, default_value_t = 1019)]
    gp_points: usize,
}

/// Bad flag values caught after parsing; reported with the usage exit code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_technique(name: &str) -> Result<Technique> {
    name.parse().map_err(|_| usage(format!("unknown technique {name:?}")))
}

/// Default parameters for `technique`, overridden by `--ns` / `--k`.
fn params_for(technique: Technique, ns: Option<usize>, k: Option<usize>) -> Result<EstimatorParams> {
    let mut p = match technique {
        Technique::CellSense => EstimatorParams::cellsense_rural(),
        Technique::Hybrid => EstimatorParams::hybrid(),
        Technique::Deterministic => EstimatorParams::deterministic_rural(),
        Technique::Gp | Technique::CellId => EstimatorParams::new(1, 1),
    };
    if let Some(ns) = ns {
        p.n_samples = ns;
    }
    if let Some(k) = k {
        p.k = k;
    }
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn gp_grid(est: &EstimatorArgs, technique: Technique, map: &RadioMap) -> Result<Option<PrecomputedGrid>> {
    if technique != Technique::Gp {
        return Ok(None);
    }
    Ok(Some(match &est.gp_grid {
        Some(path) => load_gp_grid(path)?,
        None => gp_grid_for_map(map, &GpConfig::default(), est.gp_points)?,
    }))
}

fn create(path: &Path) -> Result<Box<dyn Write>> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(std::io::BufWriter::new(file)))
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => create(p),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { preset, seed, out } => {
            let preset = make_preset(&preset, seed).map_err(|e| usage(e.to_string()))?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let train = preset.training_trace();
            let test = preset.test_trace();
            write_trace(out.join("train.csv"), &train)?;
            write_trace(out.join("test.csv"), &test)?;
            write_towers(out.join("towers.csv"), &preset.world.tower_geo_locations())?;
            log::info!("{}: {} training scans, {} test scans", preset.kind, train.len(), test.len());
        }
        Command::Build { traces, grid_length, towers, strip_points, out } => {
            let mut scans: Vec<ScanVector> = Vec::new();
            for path in &traces {
                scans.extend(read_trace(path)?);
            }
            let mut map = build_radio_map(&scans, grid_length)?;
            if let Some(path) = towers {
                map = map.with_tower_geo_locations(&read_towers(path)?);
            }
            if strip_points {
                map = map.strip_points();
            }
            save_radio_map(&map, &out)?;
            log::info!("{} cells, {} towers", map.cells().len(), map.towers().len());
        }
        Command::GpGrid { map, points, out } => {
            let map = load_radio_map(map)?;
            let grid = gp_grid_for_map(&map, &GpConfig::default(), points)?;
            save_gp_grid(&grid, out)?;
        }
        Command::Locate { est, scans, out } => {
            let technique = parse_technique(&est.technique)?;
            let params = params_for(technique, est.ns, est.k)?;
            let map = load_radio_map(&est.map)?;
            let grid = gp_grid(&est, technique, &map)?;
            let localizer = make_localizer(technique, &map, params, grid.as_ref())?;
            let trace = read_trace(scans)?;
            let projection = map.projection();
            let mut w = output(out.as_ref())?;
            writeln!(w, "timestamp,lat,lon")?;
            for end in 0..trace.len() {
                let window = ScanWindow::trailing(&trace, end, localizer.window_len())?;
                let g = projection.unproject(&localizer.locate(&window)?.location);
                writeln!(w, "{},{},{}", trace[end].timestamp(), g.lat(), g.lon())?;
            }
            w.flush()?;
        }
        Command::Evaluate { est, scans, truth_required, out, cdf } => {
            let technique = parse_technique(&est.technique)?;
            let params = params_for(technique, est.ns, est.k)?;
            let map = load_radio_map(&est.map)?;
            let grid = gp_grid(&est, technique, &map)?;
            let mut trace = read_trace(scans)?;
            if !truth_required {
                let before = trace.len();
                trace.retain(|s| s.truth().is_some());
                if trace.len() < before {
                    log::warn!("skipped {} scans without ground truth", before - trace.len());
                }
            }
            let report = evaluate_technique(technique, &map, params, grid.as_ref(), &trace, &EvalOptions::default())?;
            match &out {
                Some(path) => write_reports_csv(path, std::slice::from_ref(&report))?,
                None => write_reports(std::io::stdout().lock(), std::slice::from_ref(&report))?,
            }
            if let Some(path) = cdf {
                write_cdf_csv(path, &report)?;
            }
        }
        Command::Sweep {
            param,
            values,
            technique,
            preset,
            seed,
            train,
            test,
            towers,
            grid_length,
            ns,
            k,
            gp_points,
            out,
        } => {
            let param: SweepParam = param.parse().map_err(|e: cellsense::Error| usage(e.to_string()))?;
            let technique = parse_technique(&technique)?;
            let scenario = match (train, test) {
                (Some(train), Some(test)) => Scenario {
                    train: read_trace(train)?,
                    test: read_trace(test)?,
                    tower_locations: towers.map(read_towers).transpose()?,
                },
                _ => Scenario::from_preset(&make_preset(&preset, seed).map_err(|e| usage(e.to_string()))?),
            };
            let config = SweepConfig {
                technique,
                grid_length,
                params: params_for(technique, ns, k)?,
                seed,
                gp_points,
                ..SweepConfig::default()
            };
            let rows = sweep(&scenario, param, &values, &config)?;
            write_sweep(output(out.as_ref())?, &rows)?;
        }
    }
    Ok(())
}

/// The error chain joined with `: `, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            let is_usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(e.downcast_ref::<cellsense::Error>(), Some(cellsense::Error::InvalidArgument(_)));
            ExitCode::from(if is_usage { 1 } else { 2 })
        }
    }
}
