#![allow(dead_code)]

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::potential::{normalize, Family, NormalizeOptions, Potential, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};

pub fn potential(dim: usize, family: Family, generalized: bool) -> Arc<Potential> {
    let raw = RawPotential::new(dim, family).unwrap();
    Arc::new(normalize(&raw, NormalizeOptions { generalized, ..Default::default() }).unwrap())
}

pub fn harmonic(dim: usize) -> Arc<Potential> {
    potential(dim, Family::FullyHarmonic, false)
}

pub fn quartic() -> Arc<Potential> {
    potential(1, Family::PowerLaw { gamma: 4.0, a: 1.0, z: 0.0 }, false)
}

pub fn radial() -> Arc<Potential> {
    potential(2, Family::RadialPolynomial { coeffs: vec![0.0, 0.5, 0.25] }, false)
}

pub fn symmetry(pot: &Potential) -> SymmetryStructure {
    SymmetryStructure::detect(pot, DEFAULT_RANK_TOL).unwrap()
}

pub fn disc(pot: &Arc<Potential>, n: usize, order: usize) -> Discretization {
    Discretization::new(pot.clone(), n, None, order).unwrap()
}
