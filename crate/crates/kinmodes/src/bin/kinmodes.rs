use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinmodes::cli::{resolve_threads, run, Command};
use kinmodes::config::RunConfig;

#[derive(Parser)]
#[command(name = "kinmodes", version, about = "Special modes and hypocoercive decay of linear kinetic equations")]
struct Args {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Evolve a datum, fit the decay and write the trajectory and reports.
    Evolve(Common),
    /// Mode generators, Gram matrix and the conserved mode of the datum.
    Modes(Common),
    /// Poincare, rigidity and collision constants.
    Constants(Common),
    /// Run the property suite and print a pass/fail table.
    Verify(Common),
}

#[derive(clap::Args)]
struct Common {
    /// TOML or JSON configuration; layered over --preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Named preset: harmonic-d1, quartic-d1, radial-d2, aniso-d2, harmonic-d2, smoke-d1.
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads; KINMODES_THREADS takes precedence.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (cmd, c) = match args.command {
        Sub::Evolve(c) => (Command::Evolve, c),
        Sub::Modes(c) => (Command::Modes, c),
        Sub::Constants(c) => (Command::Constants, c),
        Sub::Verify(c) => (Command::Verify, c),
    };
    let mut cfg = match RunConfig::load(c.config.as_deref(), c.preset.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            let j = serde_json::json!({"command": cmd.name(), "run": "", "failures": [{
                "invariant": "configuration valid", "module": e.owner(), "detail": format!("{}: {e}", e.kind()),
            }]});
            eprintln!("{j}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let outcomes = match run(cmd, &cfg, &out, resolve_threads(c.threads)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"command": cmd.name(), "failures": [{
                "invariant": "sweep expanded", "module": e.owner(), "detail": e.to_string()}]}));
            return ExitCode::from(2);
        }
    };
    let mut ok = true;
    for o in &outcomes {
        if !o.label.is_empty() {
            println!("[{}]", o.label);
        }
        print!("{}", o.table());
        if !o.passed() {
            ok = false;
            eprintln!("{}", o.failures_json());
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
