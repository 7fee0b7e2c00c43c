//! `kgbohm` command-line runner.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgbohm::scenario::{run, ScenarioConfig};
use kgbohm::{Error, Exec};

/// Bundled reproduction configs: name, file contents.
const BUNDLED: &[(&str, &str)] = &[
    ("collinear", include_str!("../scenarios/collinear.json")),
    ("anticollinear_eta4", include_str!("../scenarios/anticollinear_eta4.json")),
    ("stationary", include_str!("../scenarios/stationary.json")),
    ("two_slit_alpha", include_str!("../scenarios/two_slit_alpha.json")),
    ("nparticle_product", include_str!("../scenarios/nparticle_product.json")),
];

#[derive(Parser)]
#[command(name = "kgbohm", version, about = "Bohmian trajectories for the free Klein-Gordon equation")]
struct Cli {
    /// Cap on worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON file or a bundled name.
    Run { config: String },
    /// List the bundled scenarios.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn load(config: &str) -> Result<ScenarioConfig, Error> {
    let path = PathBuf::from(config);
    if path.exists() {
        return ScenarioConfig::load(&path);
    }
    let name = config.trim_end_matches(".json");
    match BUNDLED.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => ScenarioConfig::from_json(text),
        None => Err(Error::Config(format!("{config}: no such file or bundled scenario"))),
    }
}

fn list(json: bool) {
    let rows: Vec<(&str, ScenarioConfig)> = BUNDLED
        .iter()
        .map(|(n, t)| (*n, ScenarioConfig::from_json(t).expect("bundled configs parse")))
        .collect();
    if json {
        let v: Vec<_> = rows
            .iter()
            .map(|(n, c)| {
                serde_json::json!({
                    "name": n,
                    "kind": c.scenario.kind(),
                    "claim": c.claim,
                    "description": c.description,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&v).expect("plain json"));
        return;
    }
    println!("{:<20} {:<20} claim", "name", "kind");
    for (n, c) in &rows {
        println!("{:<20} {:<20} {}", n, c.scenario.kind(), c.claim);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::List { json } => {
            list(json);
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            match run(&cfg, Exec::from_workers(cli.workers), &cli.out) {
                Ok(out) => {
                    println!("{}", serde_json::to_string_pretty(&out.summary).expect("plain json"));
                    if out.numerical_failures > 0 {
                        eprintln!("error: {} trajectories halted at step underflow", out.numerical_failures);
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e @ (Error::Config(_) | Error::Io(_))) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
