use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinsc::config::{parse_config, RunConfig};
use spinsc::models::BUILTIN_MODELS;
use spinsc::runner::{run_experiment, RunOptions, RunReport};
use spinsc::{selftest, Error};

/// Exact and semiclassical entanglement of two coupled spins.
#[derive(Parser, Debug)]
#[command(name = "spinsc", version)]
struct Cli {
    /// Directory for relative output paths.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Print errors only.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for sweeps; 1 keeps runs bit-exact across machines.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configuration and write CSV plus metadata.
    Run { config: PathBuf },
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
    /// List the built-in Hamiltonian models.
    Models,
    /// Run the invariant suite.
    Selftest,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_SELFTEST: u8 = 1;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation { .. } => EXIT_VALIDATION,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERIC,
    }
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn print_report(report: &RunReport) {
    for case in &report.cases {
        let s = &case.result.summary;
        let sweep = case.sweep.map(|(p, v)| format!(" [{} = {v}]", p.name())).unwrap_or_default();
        println!(
            "{}{sweep}: {} rows, max residual detM {:.2e}, energy {:.2e}, im {:.2e}",
            case.csv_path.display(),
            case.result.curve.len(),
            s.max_residual_det_m,
            s.max_residual_energy,
            s.max_residual_im_psc
        );
        if s.flagged_rows > 0 {
            println!("  {} flagged rows, {} outside the validity window", s.flagged_rows, s.breakdown_rows);
        }
    }
    println!("done in {:.2} s", report.wall_time_s);
}

fn run(cli: &Cli) -> Result<u8, Error> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config)?;
            let opts = RunOptions { output_dir: cli.output_dir.clone(), threads: cli.threads as usize };
            let report = run_experiment(&cfg, &opts)?;
            if !cli.quiet {
                print_report(&report);
            }
            if report.has_breakdown() {
                let first = report.cases.iter().filter_map(|c| c.result.summary.first_breakdown_t).fold(f64::INFINITY, f64::min);
                eprintln!("ValidityBreakdown: semiclassical purity undefined from t = {first}; rows written as nan");
                return Ok(EXIT_NUMERIC);
            }
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = load(config)?;
            if !cli.quiet {
                let cases = cfg.cases().len();
                println!("ok: model {}, {cases} case(s), {} points each", cfg.model_name(), cfg.time.num_points);
            }
            Ok(0)
        }
        Command::Models => {
            for (name, summary) in BUILTIN_MODELS {
                println!("{name:<16} {summary}");
            }
            Ok(0)
        }
        Command::Selftest => {
            let mut failed = 0;
            for &(id, ..) in selftest::CRITERIA {
                let r = selftest::run_criterion(id).expect("listed criterion");
                if !r.passed {
                    failed += 1;
                }
                if !cli.quiet || !r.passed {
                    println!("{}", r.line());
                }
            }
            Ok(if failed == 0 { 0 } else { EXIT_SELFTEST })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}: {e}", e.class());
            ExitCode::from(exit_code(&e))
        }
    }
}
