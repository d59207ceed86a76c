//! Command-line front end.
//!
//! Exit codes: 0 success, 1 output failure, 2 invalid input, 3 the filter
//! could not assimilate an event.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::estimate::{estimate_model, EstimateError, SpreadTarget};
use crate::filter::{init, FilterError, FilterOptions, PosteriorSummary};
use crate::io::config::{EstimateConfig, ModelFile, PriorFile, RunConfig, SimulateConfig, Units};
use crate::io::events::{read_events, write_events};
use crate::io::tables::{
    parse_composite, parse_summary, write_composite, write_diagnostics, write_envelope, write_summary, write_trajectories,
    write_truth,
};
use crate::io::{read_to_string, write_atomic, IoError};
use crate::model::BondUniverse;
use crate::par::Execution;
use crate::sim::simulate;

pub const OUT_ENV: &str = "BONDMID_OUT";

#[derive(Debug, Parser)]
#[command(name = "bondmid", version, about = "Particle-filter estimates of bond mid yields and bid-ask spreads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a market: truth paths, events, composites and the generating model.
    Simulate(SimulateArgs),
    /// Run the filter over an event file and write posterior summaries.
    Filter(FilterArgs),
    /// Calibrate a model from composite quotes and optional trades.
    Estimate(EstimateArgs),
    /// Turn a summary table into quantile envelopes for plotting.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory [default: the config's `out`, else `out`]
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Comma-separated probability levels, e.g. 0.1,0.5,0.9
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Worker threads for the particle loops
    #[arg(long)]
    pub threads: Option<usize>,
    /// Run the particle loops on the calling thread only
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Bp,
    Percent,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary table written by `filter`
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "bp")]
    pub units: UnitArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Filter(String),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Output(_) => 1,
            CliError::Input(_) => 2,
            CliError::Filter(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Filter(m) | CliError::Output(m) => m,
        }
    }
}

fn input(e: impl ToString) -> CliError {
    CliError::Input(e.to_string())
}

fn output(e: IoError) -> CliError {
    CliError::Output(e.to_string())
}

fn out_dir(flag: &OutArg, config: Option<&PathBuf>) -> PathBuf {
    flag.out
        .clone()
        .or_else(|| config.cloned())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_model(path: &Path) -> Result<(ModelFile, crate::model::ValidatedModel), CliError> {
    let file = ModelFile::read(path).map_err(input)?;
    let model = file.validate(path).map_err(input)?;
    Ok((file, model))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<String, CliError> {
    let mut cfg = SimulateConfig::read(&a.config).map_err(input)?;
    if let Some(seed) = a.seed {
        cfg.sim.seed = seed;
    }
    let (model_file, model) = load_model(&cfg.model)?;
    let prior = PriorFile::read(&cfg.prior).map_err(input)?.resolve(&model);
    let truth = simulate(&model, &prior, &cfg.sim).map_err(input)?;
    let universe = model.universe();
    let dir = out_dir(&a.out, cfg.out.as_ref());
    write_atomic(&dir.join("events.jsonl"), write_events(&truth.events, universe).as_bytes()).map_err(output)?;
    write_atomic(&dir.join("truth.csv"), write_truth(&truth, universe).as_bytes()).map_err(output)?;
    write_atomic(
        &dir.join("composite.csv"),
        write_composite(&truth.composite_series(), universe).as_bytes(),
    )
    .map_err(output)?;
    write_atomic(&dir.join("model.toml"), model_file.to_toml().as_bytes()).map_err(output)?;
    write_atomic(&dir.join("prior.toml"), PriorFile::from_prior(&prior).to_toml().as_bytes()).map_err(output)?;
    Ok(format!("simulated {} events over {} days into {}", truth.events.len(), cfg.sim.horizon, dir.display()))
}

fn cmd_filter(a: &FilterArgs) -> Result<String, CliError> {
    let mut cfg = RunConfig::read(&a.config).map_err(input)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(k) = a.particles {
        cfg.particles = k;
    }
    if let Some(levels) = &a.levels {
        cfg.levels = levels.clone();
    }
    crate::filter::summary::validate_levels(&cfg.levels).map_err(input)?;
    if cfg.particles < 2 {
        return Err(input(FilterError::TooFewParticles(cfg.particles)));
    }
    let execution = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let dir = out_dir(&a.out, cfg.out.as_ref());
    match a.threads {
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Output(e.to_string()))?
            .install(|| run_filter(&cfg, execution, &dir)),
        _ => run_filter(&cfg, execution, &dir),
    }
}

fn run_filter(cfg: &RunConfig, execution: Execution, dir: &Path) -> Result<String, CliError> {
    let (_, model) = load_model(&cfg.model)?;
    let universe = model.universe().clone();
    let prior = PriorFile::read(&cfg.prior).map_err(input)?.resolve(&model);
    let events = read_events(&cfg.events, &universe).map_err(input)?;
    let mut options = FilterOptions::new(cfg.particles, cfg.seed)
        .with_execution(execution)
        .with_resampling(cfg.resampling);
    options.keep_history = cfg.trajectories.is_some();
    let mut cloud = init(&model, &prior, options).map_err(input)?;
    let levels = &cfg.levels;
    let runtime = |e: FilterError, ev: Option<&crate::model::ObservationEvent>| match (e, ev) {
        (e @ FilterError::AllWeightsZero { .. }, Some(ev)) => CliError::Filter(format!(
            "{e}\noffending event: {}",
            write_events(std::slice::from_ref(ev), &universe).trim_end()
        )),
        (e, _) => CliError::Filter(e.to_string()),
    };

    let mut rows: Vec<PosteriorSummary> = Vec::new();
    let mut diags = Vec::with_capacity(events.len());
    match cfg.report_every {
        None => {
            rows.push(cloud.posterior(&model, levels).map_err(|e| runtime(e, None))?);
            for ev in &events {
                diags.push(cloud.step(&model, ev).map_err(|e| runtime(e, Some(ev)))?);
                rows.push(cloud.posterior(&model, levels).map_err(|e| runtime(e, None))?);
            }
        }
        Some(step) => {
            let until = cfg.report_until.unwrap_or_else(|| events.last().map_or(0.0, |e| e.time));
            let grid_time = |k: u64| k as f64 * step;
            let mut k = 0u64;
            for ev in &events {
                while grid_time(k) < ev.time && grid_time(k) <= until {
                    rows.push(cloud.predict(&model, grid_time(k), levels).map_err(|e| runtime(e, None))?);
                    k += 1;
                }
                diags.push(cloud.step(&model, ev).map_err(|e| runtime(e, Some(ev)))?);
            }
            while grid_time(k) <= until {
                if grid_time(k) >= cloud.time() {
                    rows.push(cloud.predict(&model, grid_time(k), levels).map_err(|e| runtime(e, None))?);
                }
                k += 1;
            }
        }
    }

    write_atomic(
        &dir.join("summary.csv"),
        write_summary(&rows, &universe, levels, cfg.units).as_bytes(),
    )
    .map_err(output)?;
    write_atomic(&dir.join("diagnostics.csv"), write_diagnostics(&diags, &universe).as_bytes()).map_err(output)?;
    if let Some(n) = cfg.trajectories {
        let sample = cloud.trajectories(&model);
        write_atomic(
            &dir.join("trajectories.csv"),
            write_trajectories(&sample, &universe, n, cfg.units).as_bytes(),
        )
        .map_err(output)?;
    }
    Ok(format!(
        "filtered {} events with {} particles; {} summary rows in {}",
        events.len(),
        cfg.particles,
        rows.len(),
        dir.display()
    ))
}

fn cmd_estimate(a: &EstimateArgs) -> Result<String, CliError> {
    let cfg = EstimateConfig::read(&a.config).map_err(input)?;
    let text = read_to_string(&cfg.composite).map_err(input)?;
    let table = parse_composite(&text, &cfg.composite).map_err(input)?;
    let needs_spreads = cfg.options.noise_fraction > 0.0 || matches!(cfg.options.spread, SpreadTarget::Composite { .. });
    if needs_spreads && !table.has_spread_column {
        return Err(CliError::Input(format!(
            "{}: missing column `spread` (needed for the noise fraction and composite spread targets)",
            cfg.composite.display()
        )));
    }
    let trades = match &cfg.trades {
        Some(p) => read_events(p, &table.universe).map_err(input)?,
        None => Vec::new(),
    };
    let (params, fit) = estimate_model(&table.series, &trades, &cfg.options).map_err(|e| estimate_error(e, &table.universe))?;
    let dir = out_dir(&a.out, cfg.out.as_ref());
    let file = ModelFile::new(&table.universe, params);
    // must be usable by `filter` as written
    file.validate(&dir.join("model.toml")).map_err(input)?;
    write_atomic(&dir.join("model.toml"), file.to_toml().as_bytes()).map_err(output)?;
    Ok(format!(
        "estimated {} bonds (spread targets: {:?}) into {}",
        table.universe.len(),
        fit.source,
        dir.join("model.toml").display()
    ))
}

fn estimate_error(e: EstimateError, universe: &BondUniverse) -> CliError {
    let name = |b: usize| universe.labels().get(b).cloned().unwrap_or_else(|| b.to_string());
    let msg = match &e {
        EstimateError::MissingSpreads { bond } => format!("bond `{}` has no values in column `spread`", name(*bond)),
        EstimateError::DegenerateVolatility { bond } => format!("bond `{}` has zero realized volatility", name(*bond)),
        _ => e.to_string(),
    };
    CliError::Input(msg)
}

fn cmd_report(a: &ReportArgs) -> Result<String, CliError> {
    let text = read_to_string(&a.input).map_err(input)?;
    let table = parse_summary(&text, &a.input).map_err(input)?;
    let units = match a.units {
        UnitArg::Bp => Units::Bp,
        UnitArg::Percent => Units::Percent,
    };
    let env = write_envelope(&table, units, &a.input).map_err(input)?;
    let dir = out_dir(&a.out, None);
    let path = dir.join("envelope.csv");
    write_atomic(&path, env.as_bytes()).map_err(output)?;
    Ok(format!("wrote {} envelope rows to {}", 2 * table.rows.len(), path.display()))
}
