use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skorokhod::cli::{self, Overrides};

#[derive(Parser)]
#[command(name = "skorokhod", version, about = "Run differential-inclusion scenarios")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (TOML, or JSON such as a previous summary).
    Run {
        scenario: PathBuf,
        /// Output directory for the artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed in hex.
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// List operator, graph, noise and experiment kinds.
    ListKinds,
    /// Run only the operator audit of a scenario.
    Audit {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::ListKinds => {
            for line in cli::kinds() {
                println!("{line}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Run {
            scenario,
            out,
            seed,
            paths,
            steps,
        } => {
            let overrides = Overrides { seed, paths, steps };
            cli::run_file(&scenario, &overrides, out.as_deref())
        }
        Command::Audit { scenario, out } => cli::audit_file(&scenario, &Overrides::default(), out.as_deref()),
    };
    let code = match result {
        Ok(report) => {
            for check in &report.checks {
                let verdict = if check.pass { "pass" } else { "FAIL" };
                println!("{verdict} {} (value {:.6e}, threshold {:.6e})", check.name, check.value, check.threshold);
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
