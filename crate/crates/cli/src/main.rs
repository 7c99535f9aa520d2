use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use edgefabric::sim::scenario::{parse_value, ParamError, Scenario, ScenarioError};
use edgefabric::sim::{engine, sweep};
use thiserror::Error;

mod plot;
mod svg;

use plot::PlotError;

#[derive(Debug, Parser)]
#[command(
    name = "edgefabric",
    version,
    about = "Run and plot edge memory fabric simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file against the schema.
    Validate { path: PathBuf },
    /// Run a scenario and write requests.csv, throughput.csv and joins.csv.
    Run {
        path: PathBuf,
        #[arg(long, env = "EDGEFABRIC_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render SVG figures from the CSVs of earlier runs.
    Plot {
        /// One directory per panel for fig4; a single directory otherwise.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        figure: Figure,
        /// Output file; defaults to `<first dir>/<figure>.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one numeric scenario field across values and seeds.
    Sweep {
        path: PathBuf,
        /// Dotted path of the field, e.g. `radio.range_m`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seeds: u32,
        /// First seed of the sweep.
        #[arg(long, env = "EDGEFABRIC_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig4,
    Fig6,
    Latency,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Param(#[from] ParamError),
    #[error("{0}")]
    Plot(#[from] PlotError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(ScenarioError::Parse { .. })
            | CliError::Param(ParamError::Scenario(ScenarioError::Parse { .. })) => 2,
            CliError::Scenario(ScenarioError::Schema(_))
            | CliError::Param(ParamError::Scenario(ScenarioError::Schema(_)))
            | CliError::Param(ParamError::UnknownParameter(_)) => 3,
            CliError::Read { .. } | CliError::Write { .. } | CliError::Plot(_) => 4,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_owned(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    Ok(Scenario::from_json(&read(path)?)?)
}

fn validate(path: &Path) -> Result<(), CliError> {
    load(path)?;
    println!("{}: ok", path.display());
    Ok(())
}

fn run(path: &Path, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let scenario = load(path)?;
    let seed = seed.unwrap_or(scenario.run.seed);
    let record = engine::run(&scenario, seed);
    write(&out.join("requests.csv"), &record.requests_csv())?;
    write(&out.join("throughput.csv"), &record.throughput_csv())?;
    write(&out.join("joins.csv"), &record.joins_csv())?;
    write(&out.join("positions.csv"), &record.positions_csv())?;
    println!("seed={seed} {}", record.summary().line());

    if scenario.run.speed_sweep.is_some() {
        let rows = sweep::speed_sweep(&scenario, seed);
        write(&out.join("sweep.csv"), &sweep::to_csv(&rows))?;
        write(&out.join("sweep_samples.csv"), &sweep::samples_csv(&rows))?;
        print!("{}", sweep::to_csv(&rows));
    }
    Ok(())
}

fn sweep_cmd(
    path: &Path,
    param: &str,
    values: &[f64],
    seeds: u32,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let text = read(path)?;
    let base = parse_value(&text)?;
    let scenario = Scenario::from_value(base.clone())?;
    let seeds = sweep::seeds(seed.unwrap_or(scenario.run.seed), seeds.max(1));
    let rows = sweep::param_sweep(&base, param, values, &seeds)?;
    write(&out.join("sweep.csv"), &sweep::to_csv(&rows))?;
    write(&out.join("sweep_samples.csv"), &sweep::samples_csv(&rows))?;
    print!("{}", sweep::to_csv(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Validate { path } => validate(path),
        Command::Run { path, seed, out } => run(path, *seed, out),
        Command::Plot { dirs, figure, out } => {
            let target = out
                .clone()
                .unwrap_or_else(|| dirs[0].join(format!("{}.svg", plot::name(*figure))));
            plot::render(dirs, *figure)
                .map_err(CliError::from)
                .and_then(|svg| {
                    write(&target, &svg)?;
                    println!("wrote {}", target.display());
                    Ok(())
                })
        }
        Command::Sweep {
            path,
            param,
            values,
            seeds,
            seed,
            out,
        } => sweep_cmd(path, param, values, *seeds, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Scenario(ScenarioError::Schema(errs)) => {
                    for err in errs {
                        eprintln!("error: {err}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
