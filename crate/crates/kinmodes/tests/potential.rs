use std::sync::Arc;

use kinmodes::potential::*;
use kinmodes::Error;
use proptest::prelude::*;

fn moments(pot: &Potential) -> (f64, Vec<f64>, Vec<f64>) {
    // Independent trapezoid rule on a fine box, not the stored quadrature.
    let d = pot.dim;
    let n: usize = if d == 1 { 4001 } else { 301 };
    let l = pot.half_width;
    let h = 2.0 * l / (n - 1) as f64;
    let mut mass = 0.0;
    let mut mean = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut hb = vec![0.0; d * d];
    let mut x = vec![0.0; d];
    for idx in 0..n.pow(d as u32) {
        let mut rem = idx;
        let mut w = 1.0;
        for xj in x.iter_mut() {
            let i = rem % n;
            rem /= n;
            *xj = -l + i as f64 * h;
            w *= h * if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        }
        let r = w * pot.rho(&x);
        mass += r;
        for j in 0..d {
            mean[j] += r * x[j];
        }
        pot.hess(&x, &mut hb);
        for k in 0..d * d {
            hess[k] += r * hb[k];
        }
    }
    (mass, mean, hess)
}

#[test]
fn normalization_of_quartic() {
    let raw = RawPotential::new(1, Family::PowerLaw { gamma: 4.0, a: 1.0, z: 0.0 }).unwrap();
    let pot = normalize(&raw, NormalizeOptions::default()).unwrap();
    let (mass, mean, hess) = moments(&pot);
    assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    assert!(mean[0].abs() < 1e-8);
    assert!((hess[0] - 1.0).abs() < 1e-8, "hess {hess:?}");
}

#[test]
fn generalized_normalization_keeps_frequencies() {
    let raw = RawPotential::new(2, Family::AnisotropicHarmonic { p: vec![1.0, 2.0] }).unwrap();
    let pot = normalize(&raw, NormalizeOptions { generalized: true, ..Default::default() }).unwrap();
    assert!((pot.freq_sq[0] - 1.0).abs() < 1e-8 && (pot.freq_sq[1] - 4.0).abs() < 1e-8);
    let (mass, _, hess) = moments(&pot);
    assert!((mass - 1.0).abs() < 1e-8);
    assert!((hess[3] - 4.0).abs() < 1e-6);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(sym.harmonic_indices, vec![0, 1]);
    assert!(!sym.has_pulsating());
    assert!(sym.rotation_basis.is_empty());
}

#[test]
fn radial_potential_has_one_rotation() {
    let raw = RawPotential::new(2, Family::RadialPolynomial { coeffs: vec![0.0, 0.5, 0.25] }).unwrap();
    let pot = normalize(&raw, NormalizeOptions::default()).unwrap();
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL).unwrap();
    assert!(sym.harmonic_indices.is_empty());
    assert_eq!(sym.rotation_basis.len(), 1);
    assert!(sym.rotation_complement.is_empty());
}

#[test]
fn partially_harmonic_polynomial() {
    let t = PolyTable::from_terms(2, &[(vec![2, 0], 0.5), (vec![0, 2], 0.5), (vec![0, 4], 0.25)]);
    let raw = RawPotential::new(2, Family::Polynomial(t)).unwrap();
    let pot = normalize(&raw, NormalizeOptions::default()).unwrap();
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(sym.harmonic_indices, vec![0]);
    assert_eq!(sym.d_phi, 1);
    assert!(!sym.has_pulsating());
}

#[test]
fn nonconfining_potential_rejected() {
    // Linear growth in one direction only: no finite mass.
    let t = PolyTable::from_terms(2, &[(vec![2, 0], 0.5), (vec![0, 1], 1.0)]);
    let raw = RawPotential::new(2, Family::Polynomial(t)).unwrap();
    assert!(normalize(&raw, NormalizeOptions::default()).is_err());
}

#[test]
fn bad_parameters_rejected() {
    assert!(matches!(RawPotential::new(1, Family::PowerLaw { gamma: 1.0, a: 1.0, z: 0.0 }), Err(Error::Config(_))));
    assert!(RawPotential::new(2, Family::AnisotropicHarmonic { p: vec![1.0] }).is_err());
    assert!(RawPotential::new(0, Family::FullyHarmonic).is_err());
}

#[test]
fn rank_gap_is_enforced() {
    assert_eq!(numerical_rank(&[1.0, 1e-14], 1.0, 1e-8).unwrap(), 1);
    assert!(matches!(numerical_rank(&[1.0, 2e-8], 1.0, 1e-8), Err(Error::AmbiguousRank(_))));
    assert_eq!(numerical_rank(&[3.0, 2.0], 1.0, 1e-8).unwrap(), 2);
}

#[test]
fn nested_table_matches_terms() {
    let v: serde_json::Value = serde_json::from_str("[[0, 0, 1], [2, 0, 0], [0.5]]").unwrap();
    let a = PolyTable::from_nested(2, &v).unwrap();
    let b = PolyTable::from_terms(2, &[(vec![0, 2], 1.0), (vec![1, 0], 2.0), (vec![2, 0], 0.5)]);
    for x in [[0.3, -1.2], [2.0, 0.5], [-0.7, 0.0]] {
        assert!((a.eval(&x) - b.eval(&x)).abs() < 1e-14);
    }
}

fn custom_quartic() -> Family {
    Family::Custom {
        name: "quartic".into(),
        phi: Arc::new(|y: &[f64]| (1.0 + y[0] * y[0]).powi(2)),
        grad: Arc::new(|y: &[f64], g: &mut [f64]| g[0] = 4.0 * y[0] * (1.0 + y[0] * y[0])),
        hess: Arc::new(|y: &[f64], h: &mut [f64]| h[0] = 4.0 + 12.0 * y[0] * y[0]),
    }
}

#[test]
fn custom_family_matches_builtin() {
    let a = normalize(&RawPotential::new(1, custom_quartic()).unwrap(), NormalizeOptions::default()).unwrap();
    let raw = RawPotential::new(1, Family::PowerLaw { gamma: 4.0, a: 1.0, z: 0.0 }).unwrap();
    let b = normalize(&raw, NormalizeOptions::default()).unwrap();
    for x in [-2.0, -0.5, 0.0, 1.3] {
        assert!((a.phi(&[x]) - b.phi(&[x])).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn polynomial_eval_matches_monomials(
        c in prop::collection::vec(-2.0f64..2.0, 9),
        x in -1.5f64..1.5,
        y in -1.5f64..1.5,
    ) {
        let terms: Vec<(Vec<usize>, f64)> = (0..9).map(|k| (vec![k % 3, k / 3], c[k])).collect();
        let t = PolyTable::from_terms(2, &terms);
        let naive: f64 = terms.iter().map(|(e, a)| a * x.powi(e[0] as i32) * y.powi(e[1] as i32)).sum();
        prop_assert!((t.eval(&[x, y]) - naive).abs() < 1e-12 * (1.0 + naive.abs()));
        // Derivative along x against the monomial rule.
        let dx = t.derivative(0).eval(&[x, y]);
        let naive_dx: f64 = terms.iter().filter(|(e, _)| e[0] > 0)
            .map(|(e, a)| a * e[0] as f64 * x.powi(e[0] as i32 - 1) * y.powi(e[1] as i32)).sum();
        prop_assert!((dx - naive_dx).abs() < 1e-12 * (1.0 + naive_dx.abs()));
    }

    #[test]
    fn anisotropic_normalization_is_exact(p1 in 0.5f64..2.0, p2 in 0.5f64..2.0) {
        let raw = RawPotential::new(2, Family::AnisotropicHarmonic { p: vec![p1, p2] }).unwrap();
        let pot = normalize(&raw, NormalizeOptions::default()).unwrap();
        // After rescaling the Hessian average is the identity: fully harmonic.
        let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(sym.harmonic_indices.clone(), vec![0, 1]);
        prop_assert!(sym.has_pulsating());
        let x = [0.4, -0.9];
        prop_assert!((pot.phi(&x) - (0.5 * (x[0] * x[0] + x[1] * x[1]) + (2.0 * std::f64::consts::PI).ln())).abs() < 1e-7);
    }

    #[test]
    fn powerlaw_gradient_matches_finite_differences(gamma in 1.5f64..5.0, x in -2.0f64..2.0) {
        let raw = RawPotential::new(1, Family::PowerLaw { gamma, a: 1.0, z: 0.0 }).unwrap();
        let pot = normalize(&raw, NormalizeOptions::default()).unwrap();
        let h = 1e-5;
        let fd = (pot.phi(&[x + h]) - pot.phi(&[x - h])) / (2.0 * h);
        let mut g = [0.0];
        pot.grad(&[x], &mut g);
        prop_assert!((fd - g[0]).abs() < 1e-6 * (1.0 + g[0].abs()));
        let mut hh = [0.0];
        pot.hess(&[x], &mut hh);
        let mut gp = [0.0];
        let mut gm = [0.0];
        pot.grad(&[x + h], &mut gp);
        pot.grad(&[x - h], &mut gm);
        prop_assert!(((gp[0] - gm[0]) / (2.0 * h) - hh[0]).abs() < 1e-5 * (1.0 + hh[0].abs()));
    }
}
