//! Random perturbation of the quartic well: the distance to the conserved
//! mode decays exponentially even though only mass and energy are conserved.
//!
//! `cargo run --release --example hypocoercive_decay [t_end]`

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::collision::BgkOperator;
use kinmodes::diagnostics::{htheorem_check, HTHEOREM_BUDGET};
use kinmodes::evolve::{Evolver, IntegratorConfig};
use kinmodes::initial::InitialDatum;
use kinmodes::modes::conserved_mode;
use kinmodes::potential::{normalize, Family, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};
use kinmodes::spectral::fit_decay;

fn main() -> kinmodes::Result<()> {
    let t_end: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100.0);
    let raw = RawPotential::new(1, Family::PowerLaw { gamma: 4.0, a: 1.0, z: 0.0 })?;
    let pot = Arc::new(normalize(&raw, NormalizeOptions::default())?);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
    let disc = Discretization::new(pot, 128, None, 8)?;
    let h0 = InitialDatum::RandomSeeded(Some(1)).build(&disc, &sym, 0)?;
    let mode = conserved_mode(&disc, &h0, Some(&sym))?;
    let bgk = BgkOperator::new(&disc, 1.0)?;
    let cfg = IntegratorConfig { dt: 2e-3, t_end, output_stride: 50, ..Default::default() };
    let traj = Evolver::new(&disc, bgk, cfg)?.run(&h0, &mode, &sym, None)?;
    for r in traj.records.iter().step_by(traj.records.len() / 10) {
        println!("t = {:7.2}  |h - h_par| = {:.4e}  |h_perp| = {:.4e}", r.t, r.dist_mode, r.norm_hperp);
    }
    let fit = fit_decay(&traj, None)?;
    println!("kappa = {:.5} (R^2 = {:.5}, {:?})", fit.kappa, fit.r2, fit.status);
    let h = htheorem_check(&traj, HTHEOREM_BUDGET);
    println!("largest H-theorem violation per output: {:.2e}", h.max_violation);
    for (name, drift) in traj.conservation_drift() {
        println!("drift of {name}: {drift:.2e}");
    }
    Ok(())
}
