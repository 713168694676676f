//! Lists the special-mode generators of a potential, checks their Gram matrix
//! and reads the conserved mode off a random datum.

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::initial::InitialDatum;
use kinmodes::modes::{conserved_mode, generators, orthonormality_gram, residual_mode_system};
use kinmodes::potential::{normalize, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};

fn main() -> kinmodes::Result<()> {
    let pot = Arc::new(normalize(&RawPotential::fully_harmonic(2), NormalizeOptions::default())?);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
    let disc = Discretization::new(pot, 32, None, 6)?;
    let gens = generators(&disc, &sym)?;
    let gram = orthonormality_gram(&disc, &gens)?;
    println!("generators: {}", gens.names.join(", "));
    println!("Gram matrix:{gram:.3e}");
    for (name, m) in gens.names.iter().zip(&gens.modes) {
        let r = residual_mode_system(&disc, m, 0.7)?;
        println!("{name:>16}: largest residual of the mode equations at t = 0.7: {:.2e}", r.max());
    }
    let h0 = InitialDatum::RandomSeeded(Some(3)).build(&disc, &sym, 0)?;
    let mode = conserved_mode(&disc, &h0, Some(&sym))?;
    println!("conserved mode of a random datum:");
    println!("  alpha {:.5}, beta {:.5}", mode.alpha, mode.beta);
    println!("  rotation {:.5}", mode.rotation[(0, 1)]);
    println!("  gamma {:?}, gamma_bar {:?}", mode.gamma, mode.gamma_bar);
    println!("  delta {:.5}, delta_bar {:.5}", mode.delta, mode.delta_bar);
    Ok(())
}
