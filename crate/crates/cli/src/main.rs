//! `passive-qkd`: run and validate analysis scenarios.

mod run;
mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scenario::{Issue, Resolved};

const BUNDLED: &[(&str, &str)] = &[
    ("sec2-apn", include_str!("../scenarios/sec2-apn.toml")),
    ("fig4a", include_str!("../scenarios/fig4a.toml")),
    ("fig4b", include_str!("../scenarios/fig4b.toml")),
    ("fig6a", include_str!("../scenarios/fig6a.toml")),
    ("fig6b", include_str!("../scenarios/fig6b.toml")),
];

#[derive(Parser)]
#[command(
    name = "passive-qkd",
    version,
    about = "Key rates and monitor bounds for QKD with an untrusted source"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name
    Run {
        scenario: String,
        /// override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// worker threads (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// write the table here instead of stdout
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// override the confidence parameter
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Check a scenario without running it
    Validate { scenario: String },
    /// List the bundled scenarios
    ListScenarios,
}

enum Failure {
    Validation(Vec<Issue>),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn report(&self) {
        match self {
            Failure::Validation(issues) => {
                eprintln!("validation failed with {} issue(s)", issues.len());
                for issue in issues {
                    eprintln!("{issue}");
                }
            }
            Failure::Numerical(m) => eprintln!("numerical failure: {m}"),
            Failure::Io(m) => eprintln!("i/o error: {m}"),
        }
    }
}

fn load(name: &str) -> Result<String, Failure> {
    let path = Path::new(name);
    if !path.exists() {
        if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) {
            return Ok(text.to_string());
        }
    }
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{name}: {e}")))
}

fn resolve(text: &str, seed: Option<u64>, alpha: Option<f64>) -> Result<Resolved, Failure> {
    let mut s = scenario::parse(text).map_err(Failure::Validation)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(alpha) = alpha {
        s.alpha = alpha;
    }
    scenario::resolve(s).map_err(Failure::Validation)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::ListScenarios => {
            for (name, text) in BUNDLED {
                let description = scenario::parse(text)
                    .map(|s| s.description)
                    .unwrap_or_default();
                println!("{name}\t{description}");
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let resolved = resolve(&load(&scenario)?, None, None)?;
            println!(
                "valid\t{}\t{} curve(s)",
                resolved.scenario.name,
                resolved.curves.len()
            );
            Ok(())
        }
        Command::Run {
            scenario,
            seed,
            threads,
            output,
            alpha,
        } => {
            let resolved = resolve(&load(&scenario)?, seed, alpha)?;
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Failure::Numerical(format!("thread pool: {e}")))?;
            }
            let outputs = run::run(&resolved).map_err(|e| Failure::Numerical(e.to_string()))?;
            let table = run::table(&resolved, &outputs);
            let summary = run::summary(&resolved, &outputs);
            match output.or_else(|| resolved.scenario.output.clone()) {
                Some(path) => {
                    fs::write(&path, table)
                        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                    print!("{summary}");
                    println!("table written to {}", path.display());
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout
                        .write_all(table.as_bytes())
                        .and_then(|_| stdout.flush())
                        .map_err(|e| Failure::Io(e.to_string()))?;
                    eprint!("{summary}");
                }
            }
            let degenerate: Vec<&str> = outputs
                .iter()
                .filter(|o| o.untagged.as_ref().is_some_and(|u| u.degenerate))
                .map(|o| o.curve.label.as_str())
                .collect();
            if !degenerate.is_empty() {
                return Err(Failure::Numerical(format!(
                    "untagged bound is degenerate for {}: the noise leaks into the window as often as it keeps true counts in it",
                    degenerate.join(", ")
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}
