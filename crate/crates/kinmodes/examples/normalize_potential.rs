//! Normalizes a few potentials and prints what the symmetry detection finds.

use std::sync::Arc;

use kinmodes::potential::{normalize, Family, NormalizeOptions, PolyTable, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};

fn main() -> kinmodes::Result<()> {
    let cases = vec![
        ("fully harmonic, d=2", RawPotential::new(2, Family::FullyHarmonic)?, false),
        ("anisotropic (1, 2), generalized", RawPotential::new(2, Family::AnisotropicHarmonic { p: vec![1.0, 2.0] })?, true),
        ("quartic power law", RawPotential::new(1, Family::PowerLaw { gamma: 4.0, a: 1.0, z: 0.0 })?, false),
        ("radial |x|^2/2 + |x|^4/4", RawPotential::new(2, Family::RadialPolynomial { coeffs: vec![0.0, 0.5, 0.25] })?, false),
        (
            "x^2/2 + (y^2/2 + y^4/4), shifted",
            RawPotential::new(
                2,
                Family::Polynomial(PolyTable::from_terms(
                    2,
                    &[(vec![2, 0], 0.5), (vec![0, 2], 0.5), (vec![0, 4], 0.25), (vec![1, 0], 1.0)],
                )),
            )?,
            false,
        ),
    ];
    for (label, raw, generalized) in cases {
        let pot = Arc::new(normalize(&raw, NormalizeOptions { generalized, ..Default::default() })?);
        let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
        println!("{label}");
        println!("  center {:?}, shift {:.6}", pot.center, pot.shift);
        println!("  half widths {:?}", pot.half_widths);
        println!("  harmonic axes {:?}, frequencies {:?}", sym.harmonic_indices, sym.harmonic_frequencies);
        println!("  rotations {}, pulsating {}", sym.rotation_basis.len(), sym.has_pulsating());
        println!("  <|x|^4> = {:.4}, <phi^2> = {:.4}, <|grad phi|^4> = {:.4}", pot.moments.x4, pot.moments.phi2, pot.moments.grad4);
    }
    Ok(())
}
