//! Command-line front end. Exit codes: 0 success, 1 failed check, 2 usage,
//! config or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vcg_learn::experiment::{cmd_bounds, cmd_run, write_atomic, ExperimentConfig};
use vcg_learn::verify::{run_suite, Suite};
use vcg_learn::{Error, Result};

#[derive(Parser)]
#[command(name = "vcg-learn", version, about = "Simulate and verify the learning VCG mechanism")]
struct Cli {
    /// JSON experiment config; defaults reproduce the ten-bidder benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for seed-level parallelism.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate regret curves for every mechanism cell.
    Run,
    /// Print truthfulness, IR and VCG-regret bounds.
    Bounds,
    /// Run a verification suite.
    Verify {
        /// identities, truthfulness, ir, brackets, lower-bound, scaling, regret or ordering
        suite: String,
    },
    /// Write the configured market as JSON.
    DumpInstance,
}

enum Outcome {
    Done,
    ChecksFailed,
}

fn out_dir(cli: &Cli, config: &ExperimentConfig) -> PathBuf {
    cli.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    match &cli.command {
        Command::Run => {
            let dir = out_dir(cli, &config);
            let output = cmd_run(&config, &dir)?;
            for file in &output.files {
                println!("{}", file.display());
            }
        }
        Command::Bounds => {
            let table = cmd_bounds(&config)?;
            print!("{}", table.render());
            if cli.out.is_some() || config.output_dir.is_some() {
                let dir = out_dir(cli, &config);
                std::fs::create_dir_all(&dir)?;
                write_atomic(&dir.join("bounds.json"), &serde_json::to_vec_pretty(&table)?)?;
            } else {
                println!("{}", serde_json::to_string(&table)?);
            }
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let checks = run_suite(suite, &config)?;
            for check in &checks {
                println!("{check}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{suite}: {} passed, {failed} failed", checks.len() - failed);
            if failed > 0 {
                return Ok(Outcome::ChecksFailed);
            }
        }
        Command::DumpInstance => {
            let json = serde_json::to_vec_pretty(&config.instance.build()?)?;
            match cli.out.clone().or_else(|| config.output_dir.clone()) {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join("instance.json");
                    write_atomic(&path, &json)?;
                    println!("{}", path.display());
                }
                None => println!("{}", String::from_utf8_lossy(&json)),
            }
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let pool = match cli.parallel {
        Some(0) => {
            eprintln!("error: --parallel must be at least 1");
            return ExitCode::from(2);
        }
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Precondition(_)) {
                eprintln!("(a hypothesis of the requested bound or construction does not hold)");
            }
            ExitCode::from(2)
        }
    }
}
