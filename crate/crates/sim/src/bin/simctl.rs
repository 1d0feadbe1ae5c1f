use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use eesim::hazards::read_hazards;
use eesim::{export_trace, load_scenario, Simulation};
use eesim_core::safety::{classify_batch, determine_asil, Controllability, Exposure, Severity};

const EXIT_VALIDATION: u8 = 1;
const EXIT_FAULT: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "simctl", version, about = "Run and inspect E/E network scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace as JSON Lines.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Override the scenario duration.
        #[arg(long)]
        ticks: Option<u64>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario and list every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Classify one hazard.
    Asil {
        #[arg(long, value_parser = parse::<Severity>)]
        severity: Severity,
        #[arg(long, value_parser = parse::<Exposure>)]
        exposure: Exposure,
        #[arg(long, value_parser = parse::<Controllability>)]
        controllability: Controllability,
        #[arg(long)]
        relax_s3e1c3: bool,
    },
    /// Classify every hazard in a CSV file.
    AsilBatch {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        relax_s3e1c3: bool,
    },
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn load(path: &PathBuf) -> Result<eesim::ScenarioConfig, ExitCode> {
    load_scenario(&read(path)?).map_err(|e| {
        eprintln!("{}: invalid scenario", path.display());
        for m in e.messages() {
            eprintln!("  - {m}");
        }
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn execute(command: Command) -> Result<(), ExitCode> {
    match command {
        Command::Run {
            scenario,
            trace,
            ticks,
            seed,
        } => {
            let mut config = load(&scenario)?;
            if let Some(t) = ticks {
                config.duration = t;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let mut sim = Simulation::new(config).map_err(|e| {
                eprintln!("{e}");
                ExitCode::from(EXIT_VALIDATION)
            })?;
            sim.run_to_end();
            let report = sim.into_report();
            export_trace(&report.trace, &trace).map_err(|e| {
                eprintln!("error: cannot write {}: {e}", trace.display());
                ExitCode::from(EXIT_FAULT)
            })?;
            println!("{} events written to {}", report.trace.len(), trace.display());
            if report.faults > 0 {
                eprintln!("{} runtime fault(s); see `fault` events in the trace", report.faults);
                return Err(ExitCode::from(EXIT_FAULT));
            }
        }
        Command::Validate { scenario } => {
            let config = load(&scenario)?;
            println!(
                "{}: ok ({} nodes, {} stimuli)",
                scenario.display(),
                config.nodes.len(),
                config.expanded_stimuli().len()
            );
        }
        Command::Asil {
            severity,
            exposure,
            controllability,
            relax_s3e1c3,
        } => println!("{}", determine_asil(severity, exposure, controllability, relax_s3e1c3)),
        Command::AsilBatch { csv, relax_s3e1c3 } => {
            let text = read(&csv)?;
            let records = read_hazards(text.as_bytes()).map_err(|errors| {
                for e in errors {
                    eprintln!("{}: {e}", csv.display());
                }
                ExitCode::from(EXIT_VALIDATION)
            })?;
            print!("{}", classify_batch(&records, relax_s3e1c3));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
