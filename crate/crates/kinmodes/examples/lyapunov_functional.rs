//! Tracks the modified entropy `F2` of the remainder `h - h_par(t)` along a
//! harmonic run and compares it with `||h - h_par||^2`.

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::collision::BgkOperator;
use kinmodes::diagnostics::{summarize, LyapunovTracker, LyapunovWeights};
use kinmodes::evolve::{Evolver, IntegratorConfig};
use kinmodes::initial::InitialDatum;
use kinmodes::modes::conserved_mode;
use kinmodes::potential::{normalize, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};
use kinmodes::witten::{SpectrumRequest, WittenOperator};

fn main() -> kinmodes::Result<()> {
    let pot = Arc::new(normalize(&RawPotential::fully_harmonic(1), NormalizeOptions::default())?);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
    let disc = Discretization::new(pot, 128, None, 8)?;
    let omega = WittenOperator::new(&disc.grid, SpectrumRequest::Auto)?;
    let h0 = InitialDatum::MaxwellianPerturbation.build(&disc, &sym, 0)?;
    let mode = conserved_mode(&disc, &h0, Some(&sym))?;
    let bgk = BgkOperator::new(&disc, 1.0)?;
    let weights = LyapunovWeights::from_eps(1e-2);
    let mut tracker = LyapunovTracker::new(&disc, &omega, bgk, mode.clone(), weights);
    let cfg = IntegratorConfig { dt: 2e-3, t_end: 20.0, output_stride: 50, ..Default::default() };
    Evolver::new(&disc, bgk, cfg)?.run(&h0, &mode, &sym, Some(&mut tracker))?;
    println!("{:>6} {:>12} {:>12} {:>12} {:>8}", "t", "F1", "F2", "D2", "F2/|h|^2");
    for r in tracker.records.iter().step_by(20) {
        println!("{:6.2} {:12.4e} {:12.4e} {:12.4e} {:8.5}", r.t, r.f1, r.f2, r.d2, r.ratio());
    }
    let s = summarize(&tracker.records, 3.0);
    println!("F2/|h|^2 in [{:.5}, {:.5}], largest relative increase after t = 3: {:.2e}", s.min_ratio, s.max_ratio, s.max_increase);
    Ok(())
}
