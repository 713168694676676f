//! BGK relaxation without transport: the micro part decays at the collision
//! rate, the macroscopic fields stay put and the norms split orthogonally.

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::collision::{micro_projection, BgkOperator};
use kinmodes::diagnostics::pythagoras_defect;
use kinmodes::evolve::{Evolver, IntegratorConfig};
use kinmodes::initial::random_perturbation;
use kinmodes::modes::conserved_mode;
use kinmodes::potential::{normalize, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};

fn main() -> kinmodes::Result<()> {
    let pot = Arc::new(normalize(&RawPotential::fully_harmonic(1), NormalizeOptions::default())?);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
    let disc = Discretization::new(pot, 64, None, 8)?;
    let h0 = random_perturbation(&disc, 11);
    let (_, perp) = micro_projection(&disc, &h0);
    let (_, perp2) = micro_projection(&disc, &perp);
    println!("idempotence defect {:.1e}", disc.norm(&perp2.sub(&perp)?));
    let rate = 2.0;
    let bgk = BgkOperator::new(&disc, rate)?;
    let mode = conserved_mode(&disc, &h0, Some(&sym))?;
    let cfg = IntegratorConfig { dt: 1e-2, t_end: 2.0, output_stride: 20, ..Default::default() };
    let traj = Evolver::collision_only(&disc, bgk, cfg)?.run(&h0, &mode, &sym, None)?;
    let p0 = traj.records[0].norm_hperp;
    for r in &traj.records {
        println!(
            "t = {:.1}: |h_perp| / exp(-rate t) = {:.12}, |r| = {:.6}, Pythagoras defect {:.1e}",
            r.t,
            r.norm_hperp / (p0 * (-rate * r.t).exp()),
            r.norm_r,
            pythagoras_defect(r)
        );
    }
    Ok(())
}
