use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pksh::config::{Scenario, Stage};
use pksh::pipeline::{run_scenario, run_selftest, Manifest, RunOptions};
use pksh::selftest::Sizes;

/// Homogenization toolkit for prey-taxis systems under shortwave forcing.
#[derive(Parser)]
#[command(name = "pksh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files and manifest.json.
    #[arg(long, global = true, default_value = "pksh-out")]
    out: PathBuf,
    /// Restrict `run` to these stages (repeatable).
    #[arg(long, global = true)]
    stage: Vec<String>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the scenario's stages, or those named with --stage.
    Run,
    Homogenize,
    Equilibrate,
    Stability,
    SimulateSlow,
    SimulateDirect,
    Validate,
    /// Closed-form and oracle cross-checks; needs no config.
    Selftest,
}

fn fixed_stage(c: Command) -> Option<Stage> {
    match c {
        Command::Homogenize => Some(Stage::Homogenize),
        Command::Equilibrate => Some(Stage::Equilibrate),
        Command::Stability => Some(Stage::Stability),
        Command::SimulateSlow => Some(Stage::SimulateSlow),
        Command::SimulateDirect => Some(Stage::SimulateDirect),
        Command::Validate => Some(Stage::Validate),
        Command::Run | Command::Selftest => None,
    }
}

fn report(m: &Manifest) {
    for s in &m.stages {
        match &s.message {
            None => println!("{:<16} ok     {:8.3} s", s.stage, s.seconds),
            Some(msg) => eprintln!("{:<16} error  [{}] {msg}", s.stage, s.module),
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, String> {
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("--threads: {e}"))?;
    }
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        threads,
    };
    if let Command::Selftest = cli.command {
        let (m, checks) = run_selftest(&opts, Sizes::default()).map_err(|e| e.to_string())?;
        for c in &checks {
            println!(
                "{:<28} {}  worst {:.3e}  tol {:.1e}  cases {}",
                c.name,
                if c.pass { "pass" } else { "FAIL" },
                c.worst,
                c.tolerance,
                c.cases
            );
        }
        report(&m);
        return Ok(!m.failed());
    }
    let path = cli.config.as_ref().ok_or("--config is required")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let scenario = Scenario::from_toml(&text).map_err(|e| e.to_string())?;
    let only: Vec<Stage> = match fixed_stage(cli.command) {
        Some(s) => vec![s],
        None => cli
            .stage
            .iter()
            .map(|n| Stage::parse(n).ok_or_else(|| format!("config error at `--stage`: unknown stage `{n}`")))
            .collect::<Result<_, _>>()?,
    };
    let stages = scenario.stages_to_run(&only).map_err(|e| e.to_string())?;
    let m = run_scenario(&scenario, &text, &stages, &opts).map_err(|e| e.to_string())?;
    report(&m);
    Ok(!m.failed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("pksh: {e}");
            ExitCode::from(2)
        }
    }
}
