//! Evolves a directional and a pulsating generator for two periods and fits
//! the oscillation frequency of the corresponding moment.

use std::f64::consts::PI;
use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::collision::BgkOperator;
use kinmodes::evolve::{fit_frequency, Evolver, IntegratorConfig};
use kinmodes::modes::{conserved_mode, generators};
use kinmodes::potential::{normalize, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};

fn main() -> kinmodes::Result<()> {
    let pot = Arc::new(normalize(&RawPotential::fully_harmonic(1), NormalizeOptions::default())?);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
    let disc = Discretization::new(pot, 128, None, 8)?;
    let gens = generators(&disc, &sym)?;
    let bgk = BgkOperator::new(&disc, 1.0)?;
    let cfg = IntegratorConfig { dt: 2e-3, t_end: 4.0 * PI, output_stride: 10, ..Default::default() };
    for name in ["directional+_1", "pulsating+"] {
        let k = gens.names.iter().position(|n| n == name).expect("generator present");
        let h0 = &gens.states[k];
        let mode = conserved_mode(&disc, h0, Some(&sym))?;
        let traj = Evolver::new(&disc, bgk, cfg.clone())?.run(h0, &mode, &sym, None)?;
        let t = traj.times();
        let series = if name.starts_with("directional") { traj.column(|r| r.dir_x[0]) } else { traj.column(|r| r.pul_xv) };
        let w = fit_frequency(&t, &series, 0.5, 3.0);
        let worst = traj.column(|r| r.dist_mode).into_iter().fold(0.0f64, f64::max);
        println!("{name:>15}: frequency {w:.6}, largest distance to the mode {worst:.2e}");
    }
    Ok(())
}
