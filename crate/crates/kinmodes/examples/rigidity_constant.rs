//! Rigidity constant of anisotropic wells `(a x^2 + b y^2)/2` with `a = 1`.
//! Gaussian moments give `(b - a)^2 / (a + b)`, so `b = 2` yields 1/3; in two
//! dimensions the only skew direction is `J`, whose Rayleigh quotient is printed too.

use std::sync::Arc;

use nalgebra::DMatrix;

use kinmodes::potential::{normalize, rotation_grams, Family, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};
use kinmodes::spectral::rigidity_constant;

fn main() -> kinmodes::Result<()> {
    for b in [1.0f64, 1.5, 2.0, 3.0] {
        let raw = RawPotential::new(2, Family::AnisotropicHarmonic { p: vec![1.0, b.sqrt()] })?;
        let pot = Arc::new(normalize(&raw, NormalizeOptions { generalized: true, ..Default::default() })?);
        let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
        match rigidity_constant(&pot, &sym) {
            Ok(r) => {
                let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
                let (g, m) = rotation_grams(&pot, &[j]);
                let closed = (b - 1.0).powi(2) / (1.0 + b);
                println!("b = {b}: c_K = {:.10}, J quotient {:.10}, closed form {closed:.10}", r.c_k, g[(0, 0)] / m[(0, 0)]);
            }
            Err(e) => println!("b = {b}: {e}"),
        }
    }
    Ok(())
}
