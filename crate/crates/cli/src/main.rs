use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use malliavin_lab_cli::{default_config, list_scenarios, run, CliError, ScenarioConfig};

/// Numerical checks of Malliavin derivatives of Wiener functionals, forward
/// SDEs and BSDEs.
#[derive(Parser)]
#[command(name = "malliavin-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a TOML file or by built-in name.
    Run {
        /// Path to a config file, or the name of a built-in scenario.
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    List,
    /// Print the default config of a built-in scenario.
    Config { name: String },
}

fn load(target: &str) -> Result<ScenarioConfig, CliError> {
    let path = Path::new(target);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        return ScenarioConfig::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        });
    }
    default_config(target)
}

fn execute(command: Command) -> Result<bool, CliError> {
    match command {
        Command::List => {
            let width = list_scenarios().iter().map(|s| s.name.len()).max().unwrap_or(0);
            for s in list_scenarios() {
                println!("{:width$}  {}  [{}]", s.name, s.description, s.anchor);
            }
            Ok(true)
        }
        Command::Config { name } => {
            print!("{}", default_config(&name)?.to_toml());
            Ok(true)
        }
        Command::Run {
            target,
            seed,
            paths,
            threads,
            out,
        } => {
            let mut cfg = load(&target)?;
            if let Some(s) = seed {
                cfg.ensemble.seed = s;
            }
            if let Some(n) = paths {
                cfg.ensemble.n_paths = n;
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            if let Some(n) = threads {
                if n == 0 {
                    return Err(CliError::Config("flag `--threads`: must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Config(format!("flag `--threads`: {e}")))?;
            }
            let report = run(&cfg)?;
            print!("{}", report.render());
            println!("# artifacts in {}", cfg.output.dir.display());
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
