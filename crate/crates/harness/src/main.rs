use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aopi_harness::output::{summarize_log, write_curves, SlotsCsvError};
use aopi_harness::run::parse_strategies;
use aopi_harness::validate::{validate_grid, write_grid_csv, DEFAULT_TOLERANCE};
use aopi_harness::{
    emit_results, gen_traces, load_scenario, read_slots_csv, run_experiment, spec_trace, write_trace,
    HarnessError, Mode, ScenarioSpec, StrategyKind,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aopi", version, about = "Freshness-aware video analytics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario template with every default spelled out.
    Init {
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic capacity trace from a scenario's trace settings.
    TraceGen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of slots; the scenario's slot count when omitted.
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Write the analytic sweeps (policy threshold, AoPI against rate,
    /// minimum service rate) as CSV.
    Curve {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment and write slots.csv, slot_means.csv, summary.json
    /// and curves/.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "analytic")]
        mode: Mode,
        #[arg(long, default_value = "lbcd,dos,jcab,min")]
        strategies: String,
        /// Comma-separated seeds; overrides the scenario's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Overrides the scenario's slot count.
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Compare simulated and closed-form AoPI on a fixed grid. Exits with 1
    /// when a point misses the tolerance.
    Validate {
        /// Post-warmup frames per grid point.
        #[arg(long, default_value_t = 500_000)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        /// Also write the grid as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute long-run figures from a slots.csv log; prints JSON.
    Report {
        #[arg(long)]
        slots: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        p_min: f64,
    },
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn load(spec: &Path, seeds: Option<Vec<u64>>, slots: Option<usize>) -> Result<ScenarioSpec, HarnessError> {
    let mut spec = load_scenario(spec)?;
    if let Some(seeds) = seeds {
        spec.scenario.seeds = seeds;
    }
    if let Some(slots) = slots {
        spec.scenario.slots = slots;
    }
    spec.validate()?;
    Ok(spec)
}

fn execute(command: Command) -> Result<ExitCode, HarnessError> {
    match command {
        Command::Init { out } => {
            let template = ScenarioSpec::template();
            match out {
                Some(path) => write_file(&path, template.as_bytes())?,
                None => print!("{template}"),
            }
        }
        Command::TraceGen {
            spec,
            out,
            seed,
            slots,
        } => {
            let spec = load(&spec, None, slots)?;
            let trace = gen_traces(&spec.trace_params(), seed);
            let file = fs::File::create(&out).map_err(|e| HarnessError::io(&out, e))?;
            write_trace(std::io::BufWriter::new(file), &trace)
                .map_err(|e| HarnessError::io(&out, std::io::Error::other(e)))?;
        }
        Command::Curve { out } => write_curves(&out)?,
        Command::Run {
            spec,
            out,
            mode,
            strategies,
            seeds,
            slots,
        } => {
            let spec = load(&spec, seeds, slots)?;
            let strategies: Vec<StrategyKind> =
                parse_strategies(&strategies).map_err(HarnessError::Usage)?;
            let trace = spec_trace(&spec)?;
            let output = run_experiment(&spec, &strategies, mode, trace.as_ref())?;
            emit_results(&output, &out)?;
            let summary = aopi_harness::summarize(&output);
            for s in &summary.strategies {
                println!(
                    "{:<5} mean AoPI {} s, mean accuracy {}",
                    s.strategy.to_string(),
                    fmt_opt(s.mean_aopi),
                    fmt_opt(s.mean_accuracy)
                );
            }
        }
        Command::Validate {
            frames,
            seed,
            tolerance,
            out,
        } => {
            let results = validate_grid(frames, seed);
            let mut stdout = std::io::stdout().lock();
            let mut failed = false;
            for r in &results {
                let ok = r.passes(tolerance);
                failed |= !ok;
                let _ = writeln!(
                    stdout,
                    "{} {:<5} rho={:<4} p={:<4} closed={:.5} sim={:.5} err={:.3}%",
                    if ok { "PASS" } else { "FAIL" },
                    r.point.policy.to_string(),
                    r.point.rho,
                    r.point.p,
                    r.closed_form,
                    r.simulated,
                    100.0 * r.rel_error
                );
            }
            if let Some(path) = out {
                let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                write_grid_csv(file, &results)
                    .map_err(|e| HarnessError::io(&path, std::io::Error::other(e)))?;
            }
            if failed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { slots, p_min } => {
            let file = fs::File::open(&slots).map_err(|e| HarnessError::io(&slots, e))?;
            let rows = read_slots_csv(std::io::BufReader::new(file)).map_err(|source| {
                match source {
                    SlotsCsvError::Csv(e) if e.is_io_error() => {
                        HarnessError::io(&slots, std::io::Error::other(e))
                    }
                    source => HarnessError::SlotsCsv {
                        path: slots.clone(),
                        source,
                    },
                }
            })?;
            let report = summarize_log(&rows, p_min);
            let json = serde_json::to_string_pretty(&report).expect("plain data serializes");
            println!("{json}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
