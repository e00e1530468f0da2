use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use anyhow::Context;
use cavsim_core::simulation::{
    compare_runs, read_run, run, write_artifacts, ArtifactError, Mode, ScenarioConfig,
    SimulationError, TripSpec,
};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_COMPARE: u8 = 4;

#[derive(Parser)]
#[command(name = "cavsim", version, about = "Coordinated routing of automated vehicles on a grid of signal-free intersections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metric tables.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Overrides the seed of randomly generated trips.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two run directories of the same scenario.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Where to write the comparison; defaults to the first run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Proposed,
    Baseline,
    Oracle,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Proposed => Mode::Proposed,
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Oracle => Mode::Oracle,
        }
    }
}

/// Sends log lines to stderr and, once known, to the run log file.
struct Tee(Mutex<Option<File>>);

impl Write for &Tee {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::io::stderr().write_all(buf)?;
        if let Some(f) = self.0.lock().expect("log lock").as_mut() {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        if let Some(f) = self.0.lock().expect("log lock").as_mut() {
            f.flush()?;
        }
        std::io::stderr().flush()
    }
}

static LOG_SINK: Tee = Tee(Mutex::new(None));

fn init_logging() {
    let level = std::env::var("CAVSIM_LOG").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .target(env_logger::Target::Pipe(Box::new(&LOG_SINK)))
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            out,
        } => cmd_run(&config, mode.map(Mode::from), seed, out),
        Command::Compare { run_a, run_b, out } => cmd_compare(&run_a, &run_b, out),
    }
}

fn cmd_run(config: &Path, mode: Option<Mode>, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut cfg = match ScenarioConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = seed {
        match &mut cfg.trips {
            TripSpec::Random { seed, .. } => *seed = s,
            TripSpec::List(_) => log::warn!("--seed ignored: the scenario lists its trips"),
        }
    }
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("cavsim-{}", cfg.mode)));
    cfg.output_dir = Some(out.clone());
    match execute(&cfg, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<SimulationError>() {
                Some(SimulationError::OracleBudgetExceeded { .. }) => ExitCode::from(EXIT_BUDGET),
                Some(SimulationError::InvalidScenario(_)) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn execute(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log = File::create(out.join("run.log")).context("creating run log")?;
    *LOG_SINK.0.lock().expect("log lock") = Some(log);
    std::fs::write(out.join("config.resolved.json"), cfg.to_json() + "\n")
        .context("writing resolved config")?;
    let scenario = cfg.to_scenario()?;
    log::info!(
        "{} mode, {}x{} grid, {} trips, M={}",
        cfg.mode,
        cfg.grid.rows,
        cfg.grid.cols,
        scenario.trips.len(),
        cfg.m
    );
    let metrics = run(scenario)?;
    write_artifacts(&metrics, out)?;
    log::info!(
        "completed {} of {} trips, total travel time {:.6} s, {} evaluations",
        metrics.trips.len(),
        metrics.submitted,
        metrics.total_travel_time(),
        metrics.total_evaluations()
    );
    LOG_SINK.flush_file();
    Ok(())
}

impl Tee {
    fn flush_file(&self) {
        if let Some(f) = self.0.lock().expect("log lock").as_mut() {
            let _ = f.flush();
        }
    }
}

/// Scenario part of a resolved config, ignoring how it was run.
fn scenario_key(dir: &Path) -> Option<ScenarioConfig> {
    let cfg = ScenarioConfig::load(&dir.join("config.resolved.json")).ok()?;
    Some(ScenarioConfig {
        mode: Mode::Proposed,
        output_dir: None,
        delayed_only_rerouting: true,
        oracle_budget: 0,
        ..cfg
    })
}

fn cmd_compare(a: &Path, b: &Path, out: Option<PathBuf>) -> ExitCode {
    let result = (|| -> Result<_, ArtifactError> {
        if let (Some(ka), Some(kb)) = (scenario_key(a), scenario_key(b)) {
            if ka != kb {
                return Err(ArtifactError::Mismatch(
                    "resolved configs describe different scenarios".into(),
                ));
            }
        }
        let report = compare_runs(&read_run(a)?, &read_run(b)?)?;
        report.write(out.as_deref().unwrap_or(a))?;
        Ok(report)
    })();
    match result {
        Ok(report) => {
            print!("{}", report.summary_text());
            ExitCode::SUCCESS
        }
        Err(e @ (ArtifactError::Malformed { .. } | ArtifactError::Mismatch(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_COMPARE)
        }
        Err(e @ ArtifactError::Io { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_COMPARE)
        }
    }
}
