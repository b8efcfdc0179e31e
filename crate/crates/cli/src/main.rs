use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use energyfem_cli::bench::{cmd_bench, to_csv, BenchConfig, BenchMode, BenchProblem};
use energyfem_cli::verify::{cmd_verify, EXAMPLES};
use energyfem_cli::CliError;

#[derive(Parser)]
#[command(
    name = "energyfem",
    version,
    about = "Energy-based finite elements: verification examples and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification example and report measured vs expected values.
    Verify {
        example: String,
        /// JSON file overriding the example parameters.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Directory for solution fields (CSV and VTK).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time residual and tangent operations across mesh sizes.
    Bench {
        #[arg(long, default_value = "elasticity2d")]
        problem: BenchProblem,
        #[arg(long, default_value = "jvp")]
        mode: BenchMode,
        /// Comma-separated DoF targets.
        #[arg(long, value_delimiter = ',', default_value = "10000,100000,1000000")]
        dofs: Vec<usize>,
        #[arg(long, default_value_t = 50_000)]
        batch: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the registered examples.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Verify {
            example,
            problem,
            out,
        } => match cmd_verify(&example, problem.as_deref(), out.as_deref()) {
            Ok(report) => {
                println!("{report}");
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e @ CliError::UnknownExample(_)) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Bench {
            problem,
            mode,
            dofs,
            batch,
            reps,
            out,
        } => {
            let cfg = BenchConfig {
                problem,
                dofs,
                mode,
                batch_size: batch,
                repetitions: reps,
                output: out.clone(),
            };
            match cmd_bench(&cfg) {
                Ok(records) => {
                    if out.is_none() {
                        print!("{}", to_csv(&records));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::List => {
            for (name, about) in EXAMPLES {
                println!("{name:<16} {about}");
            }
            ExitCode::SUCCESS
        }
    }
}
