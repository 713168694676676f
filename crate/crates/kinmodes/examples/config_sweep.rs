//! Loads a preset, overrides a few keys, sweeps the collision rate across
//! worker threads and prints the fitted decay rate of each run.

use kinmodes::cli::{resolve_threads, run, Command};
use kinmodes::config::RunConfig;

fn main() -> kinmodes::Result<()> {
    let text = r#"
        [integrator]
        t_end = 30.0
        [diagnostics]
        lyapunov = false
        constants = false
        decay_ratio = 0.05
        [sweep]
        "collision.rate" = [0.25, 0.5, 1.0, 2.0, 4.0]
    "#;
    let cfg = RunConfig::from_str_with_preset(text, false, Some("harmonic-d1"))?;
    let out = std::env::temp_dir().join("kinmodes-sweep");
    let outcomes = run(Command::Evolve, &cfg, &out, resolve_threads(None))?;
    for o in &outcomes {
        let kappa = o.fit.as_ref().map(|f| f.kappa).unwrap_or(f64::NAN);
        println!("{:<22} kappa = {kappa:.5}  checks passed: {}", o.label, o.passed());
    }
    println!("summary in {}", out.join("sweep.csv").display());
    Ok(())
}
