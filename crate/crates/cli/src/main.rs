use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leafdyn::config::ExperimentConfig;
use leafdyn::experiments::{exit_code, list_experiments, run, run_status};

#[derive(Parser)]
#[command(name = "leafdyn", version, about = "Experiments on foliated geodesic flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config entry, e.g. `params.n=500` or `model.kind=poincare_disc`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the available experiments.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            for (name, about) in list_experiments() {
                println!("{name:<22} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, set, workers } => ExitCode::from(execute(&config, &set, workers) as u8),
    }
}

fn execute(path: &PathBuf, set: &[String], workers: Option<usize>) -> i32 {
    let config = match ExperimentConfig::load(path, set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let pool = match rayon_pool(workers) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let result = match pool {
        Some(pool) => pool.install(|| run(&config)),
        None => run(&config),
    };
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = out.write(&config.output) {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    println!("{}", out.report.summary);
    for f in &out.report.flagged {
        eprintln!("flagged: {f}");
    }
    run_status(&out)
}

fn rayon_pool(workers: Option<usize>) -> Result<Option<rayon::ThreadPool>, String> {
    match workers {
        None => Ok(None),
        Some(0) => Err("--workers must be positive".into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map(Some).map_err(|e| e.to_string()),
    }
}
