//! Poincare constant from the Witten Laplacian, for the harmonic well
//! (exactly one) and a quartic one, with sampled functional inequalities.

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::potential::{normalize, Family, NormalizeOptions, RawPotential};
use kinmodes::spectral::poincare_constant;
use kinmodes::witten::{verify_functional_inequalities, SpectrumRequest, WittenOperator};

fn main() -> kinmodes::Result<()> {
    let cases = [
        ("harmonic", RawPotential::fully_harmonic(1)),
        ("quartic", RawPotential::new(1, Family::PowerLaw { gamma: 4.0, a: 1.0, z: 0.0 })?),
    ];
    for (label, raw) in cases {
        let pot = Arc::new(normalize(&raw, NormalizeOptions::default())?);
        let disc = Discretization::new(pot, 512, Some(10.0), 4)?;
        let omega = WittenOperator::new(&disc.grid, SpectrumRequest::Dense)?;
        let p = poincare_constant(&omega, &disc.grid.w)?;
        println!("{label}: c_P = {:.8} (eigen-residual {:.1e})", p.c_p, p.residual);
        let q = verify_functional_inequalities(&disc.grid, &omega, 40, 7);
        println!("  smallest sampled Poincare ratio {:.5}", q.poincare_min_ratio);
        println!("  Lions ratios: lower {:.4}, upper {:.4}", q.lions_lower, q.lions_upper);
    }
    Ok(())
}
