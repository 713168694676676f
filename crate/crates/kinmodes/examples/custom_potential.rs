//! A user-supplied potential with analytic derivatives: a tilted double well
//! `x^4/4 - x^2/2 + 0.3 x`, evolved from a random datum.

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::collision::BgkOperator;
use kinmodes::evolve::{Evolver, IntegratorConfig};
use kinmodes::initial::InitialDatum;
use kinmodes::modes::conserved_mode;
use kinmodes::potential::{normalize, Family, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};
use kinmodes::spectral::{fit_decay, poincare_constant};
use kinmodes::witten::{SpectrumRequest, WittenOperator};

fn main() -> kinmodes::Result<()> {
    let family = Family::Custom {
        name: "tilted-double-well".into(),
        phi: Arc::new(|y: &[f64]| y[0].powi(4) / 4.0 - y[0] * y[0] / 2.0 + 0.3 * y[0]),
        grad: Arc::new(|y: &[f64], g: &mut [f64]| g[0] = y[0].powi(3) - y[0] + 0.3),
        hess: Arc::new(|y: &[f64], h: &mut [f64]| h[0] = 3.0 * y[0] * y[0] - 1.0),
    };
    let pot = Arc::new(normalize(&RawPotential::new(1, family)?, NormalizeOptions::default())?);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
    println!("center {:?}, half width {:.3}, harmonic axes {:?}", pot.center, pot.half_width, sym.harmonic_indices);
    let disc = Discretization::new(pot, 128, None, 8)?;
    let omega = WittenOperator::new(&disc.grid, SpectrumRequest::Auto)?;
    println!("c_P = {:.5}", poincare_constant(&omega, &disc.grid.w)?.c_p);
    let h0 = InitialDatum::RandomSeeded(Some(5)).build(&disc, &sym, 0)?;
    let mode = conserved_mode(&disc, &h0, Some(&sym))?;
    let cfg = IntegratorConfig { dt: 2e-3, t_end: 60.0, output_stride: 50, ..Default::default() };
    let traj = Evolver::new(&disc, BgkOperator::new(&disc, 1.0)?, cfg)?.run(&h0, &mode, &sym, None)?;
    let fit = fit_decay(&traj, None)?;
    println!("kappa = {:.5}, R^2 = {:.5}", fit.kappa, fit.r2);
    Ok(())
}
