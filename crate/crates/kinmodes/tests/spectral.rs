mod common;

use kinmodes::evolve::{Record, Trajectory};
use kinmodes::potential::{Family, PolyTable, Potential};
use kinmodes::spectral::*;
use kinmodes::witten::{verify_functional_inequalities, SpectrumRequest, WittenOperator};
use kinmodes::Error;
use proptest::prelude::*;

/// `<(grad phi . J x)^2> / <|J x|^2>` by a trapezoid rule on `[-l, l]^2`.
fn rayleigh_j(pot: &Potential, l: f64, n: usize) -> f64 {
    let h = 2.0 * l / (n - 1) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    let mut g = [0.0; 2];
    for i in 0..n {
        for j in 0..n {
            let x = [-l + i as f64 * h, -l + j as f64 * h];
            let w = (-pot.phi(&x)).exp();
            pot.grad(&x, &mut g);
            let jx = [x[1], -x[0]];
            num += w * (g[0] * jx[0] + g[1] * jx[1]).powi(2);
            den += w * (jx[0] * jx[0] + jx[1] * jx[1]);
        }
    }
    num / den
}

#[test]
fn poincare_constant_of_the_harmonic_well_is_one() {
    let pot = common::harmonic(1);
    let d = kinmodes::basis::Discretization::new(pot, 256, Some(10.0), 4).unwrap();
    let omega = WittenOperator::new(&d.grid, SpectrumRequest::Dense).unwrap();
    let p = poincare_constant(&omega, &d.grid.w).unwrap();
    assert!((p.c_p - 1.0).abs() < 1e-4, "{}", p.c_p);
    assert!(p.residual < 1e-8);
}

#[test]
fn sampled_ratios_respect_the_poincare_constant() {
    let pot = common::quartic();
    let d = common::disc(&pot, 128, 4);
    let omega = WittenOperator::new(&d.grid, SpectrumRequest::Dense).unwrap();
    let p = poincare_constant(&omega, &d.grid.w).unwrap();
    assert!(p.c_p > 0.0);
    let q = verify_functional_inequalities(&d.grid, &omega, 30, 2);
    assert!(q.poincare_min_ratio >= p.c_p * (1.0 - 1e-9));
    assert!(q.lions_lower.is_finite() && q.lions_upper.is_finite());
    assert!(q.korn.is_none());
    let partial = WittenOperator::new(&d.grid, SpectrumRequest::Partial(4)).unwrap();
    let pp = poincare_constant(&partial, &d.grid.w).unwrap();
    assert!((pp.c_p - p.c_p).abs() < 1e-8);
}

#[test]
fn rigidity_constant_of_the_one_two_well() {
    let pot = common::potential(2, Family::AnisotropicHarmonic { p: vec![1.0, 2f64.sqrt()] }, true);
    let sym = common::symmetry(&pot);
    let r = rigidity_constant(&pot, &sym).unwrap();
    assert!((r.c_k - 1.0 / 3.0).abs() < 1e-6, "{}", r.c_k);
    assert!((rayleigh_j(&pot, 9.0, 301) - 1.0 / 3.0).abs() < 1e-6);
}

#[test]
fn rigidity_against_quadrature_for_a_quartic_perturbation() {
    let t = PolyTable::from_terms(2, &[(vec![2, 0], 0.5), (vec![0, 2], 0.5), (vec![0, 4], 0.25), (vec![2, 2], 0.1)]);
    let pot = common::potential(2, Family::Polynomial(t), false);
    let sym = common::symmetry(&pot);
    assert!(sym.rotation_basis.is_empty());
    let r = rigidity_constant(&pot, &sym).unwrap();
    let oracle = rayleigh_j(&pot, 8.0, 401);
    assert!((r.c_k - oracle).abs() < 1e-6 * oracle, "{} vs {oracle}", r.c_k);
}

#[test]
fn rigidity_undefined_for_radial_and_one_dimensional_wells() {
    let pot = common::radial();
    assert!(matches!(rigidity_constant(&pot, &common::symmetry(&pot)), Err(Error::Undefined(_))));
    let pot = common::harmonic(1);
    assert!(matches!(rigidity_constant(&pot, &common::symmetry(&pot)), Err(Error::Undefined(_))));
}

fn synthetic(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> Trajectory {
    let records = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            Record { t, dist_mode: f(t), ..Default::default() }
        })
        .collect();
    Trajectory { records, ..Default::default() }
}

#[test]
fn decay_fit_on_synthetic_data() {
    let traj = synthetic(|t| 2.0 * (-0.3 * t).exp(), 400, 0.1);
    let fit = fit_decay(&traj, None).unwrap();
    assert_eq!(fit.status, FitStatus::Ok);
    assert!((fit.kappa - 0.3).abs() < 1e-10);
    assert!((fit.c - 2.0).abs() < 1e-8);
    let fit = fit_decay(&traj, Some((5.0, 20.0))).unwrap();
    assert!((fit.window.0 - 5.0).abs() < 1e-12 && fit.samples == 151);

    let wavy = synthetic(|t| (-0.05 * t).exp() * (1.5 + (3.0 * t).cos()), 400, 0.1);
    assert_eq!(fit_decay(&wavy, Some((0.0, 39.9))).unwrap().status, FitStatus::OscillatoryOrPreasymptotic);

    let flat = synthetic(|_| 1e-10, 50, 0.1);
    assert_eq!(fit_decay(&flat, None).unwrap().status, FitStatus::AlreadyConverged);
    assert!(matches!(fit_decay(&traj, Some((0.0, 0.5))), Err(Error::DegenerateWindow(_))));
}

#[test]
fn poincare_constant_decreases_as_the_well_flattens() {
    // Wider quadratic part, smaller gap.
    let mut last = f64::INFINITY;
    for a in [1.0, 0.7, 0.5] {
        let pot = common::potential(1, Family::PowerLaw { gamma: 2.0, a, z: 0.0 }, false);
        let d = common::disc(&pot, 128, 4);
        let omega = WittenOperator::new(&d.grid, SpectrumRequest::Dense).unwrap();
        let c = poincare_constant(&omega, &d.grid.w).unwrap().c_p;
        assert!(c > 0.0 && c <= last + 1e-9, "{a}: {c}");
        last = c;
    }
}

#[test]
fn korn_ratio_sampled_in_two_dimensions() {
    let pot = common::harmonic(2);
    let d = common::disc(&pot, 24, 4);
    let omega = WittenOperator::new(&d.grid, SpectrumRequest::Dense).unwrap();
    let q = verify_functional_inequalities(&d.grid, &omega, 10, 3);
    let k = q.korn.unwrap();
    assert!(k.is_finite() && k > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn anisotropic_rigidity_matches_gaussian_moments(b in 1.2f64..4.0) {
        let pot = common::potential(2, Family::AnisotropicHarmonic { p: vec![1.0, b.sqrt()] }, true);
        let r = rigidity_constant(&pot, &common::symmetry(&pot)).unwrap();
        let closed = (b - 1.0).powi(2) / (1.0 + b);
        prop_assert!((r.c_k - closed).abs() < 1e-6 * closed.max(1e-3));
    }
}
