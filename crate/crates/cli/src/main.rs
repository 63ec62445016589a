use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use mabfdr::audit::{self, AggregateWriter, AuditLog, MismatchKind};
use mabfdr::captions::load_captions;
use mabfdr::{AggregateRow, Error, Method, Scenario};

mod grid;
mod settings;

use grid::{Grid, SweepParam};
use settings::{ensure_dir, Resolved, ScenarioArgs};

#[derive(Parser)]
#[command(
    name = "mabfdr",
    version,
    about = "Bandit experiments under online FDR control"
)]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes audit.csv and aggregate.csv into --out.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (defaults to the available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a scenario over a grid of one parameter; writes aggregate.csv into --out.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// start:stop:step (inclusive) or a comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        /// Methods to compare at every grid point (defaults to --method).
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Recompute every level and decision of an audit log.
    Replay {
        /// Audit CSV written by `simulate`.
        audit: PathBuf,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn build(resolved: &Resolved) -> Result<Scenario> {
    resolved.config.validate()?;
    let scenario = match &resolved.data {
        Some(path) if resolved.config.family == mabfdr::Family::Caption => {
            let data = load_captions(path)?;
            Scenario::from_captions(resolved.config.clone(), &data)?
        }
        _ => Scenario::generate(resolved.config.clone())?,
    };
    Ok(scenario)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn simulate(args: ScenarioArgs, out: &Path, jobs: usize) -> Result<()> {
    let resolved = args.resolve()?;
    info!("simulating {}", resolved.describe());
    let scenario = build(&resolved)?;
    let runs = scenario.run_batch(jobs)?;
    let row = AggregateRow::from_runs(&scenario.config, &runs);
    ensure_dir(out)?;
    audit::write_audit(create(&out.join("audit.csv"))?, &scenario.config, &runs)?;
    audit::write_aggregate(create(&out.join("aggregate.csv"))?, &[row])?;
    info!("wrote {}", out.display());
    Ok(())
}

fn sweep(
    args: ScenarioArgs,
    param: SweepParam,
    grid: &Grid,
    methods: &[Method],
    out: &Path,
    jobs: usize,
) -> Result<()> {
    grid.check(param)?;
    let base = args.resolve()?;
    let methods = if methods.is_empty() {
        vec![base.config.method]
    } else {
        methods.to_vec()
    };
    // Validate every grid point before spending time on any of them.
    let mut points = Vec::new();
    for &value in grid.values() {
        for &method in &methods {
            let mut point = base.clone();
            point.config.method = method;
            param.apply(&mut point.config, value);
            point.config.validate()?;
            points.push(point);
        }
    }
    ensure_dir(out)?;
    let mut writer = AggregateWriter::new(create(&out.join("aggregate.csv"))?)?;
    for point in &points {
        info!(
            "sweep point: {} ({})",
            point.describe(),
            point.config.method
        );
        let scenario = build(point)?;
        let runs = scenario.run_batch(jobs)?;
        writer.write(&AggregateRow::from_runs(&scenario.config, &runs))?;
    }
    Ok(())
}

/// Prints the verdict; returns whether the log is consistent.
fn replay(path: &Path) -> Result<bool> {
    let log = AuditLog::read(path)?;
    let report = audit::replay(&log)?;
    println!("{report}");
    if let Some(m) = report.first_of(MismatchKind::Alpha) {
        println!("first level mismatch: {m}");
    }
    Ok(report.is_consistent())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_config() => 2,
        Some(Error::Data(_) | Error::Parse { .. } | Error::Csv(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match cli.command {
        Command::Simulate {
            scenario,
            out,
            jobs,
        } => simulate(scenario, &out, jobs.unwrap_or_else(default_jobs)).map(|()| true),
        Command::Sweep {
            scenario,
            param,
            grid,
            methods,
            out,
            jobs,
        } => sweep(
            scenario,
            param,
            &grid,
            &methods,
            &out,
            jobs.unwrap_or_else(default_jobs),
        )
        .map(|()| true),
        Command::Replay { audit } => replay(&audit),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
