mod common;

use kinmodes::collision::{macro_part, micro_projection, BgkOperator};
use kinmodes::initial::random_perturbation;
use kinmodes::Error;
use proptest::prelude::*;

#[test]
fn rate_must_be_positive() {
    let d = common::disc(&common::harmonic(1), 32, 4);
    assert!(matches!(BgkOperator::new(&d, 0.0), Err(Error::Config(_))));
    assert!(BgkOperator::new(&d, f64::NAN).is_err());
    assert_eq!(BgkOperator::new(&d, 2.5).unwrap().gap(), 2.5);
}

#[test]
fn collision_kills_invariants_and_damps_the_rest() {
    let d = common::disc(&common::harmonic(2), 12, 4);
    let bgk = BgkOperator::new(&d, 1.5).unwrap();
    let h = random_perturbation(&d, 4);
    let ch = bgk.apply(&h).unwrap();
    assert!(d.norm(&macro_part(&d, &ch)) == 0.0);
    let (_, perp) = micro_projection(&d, &h);
    let mut expect = perp.clone();
    expect.scale(-1.5);
    assert!(d.norm(&ch.sub(&expect).unwrap()) < 1e-15);
    // Dissipation identity: <C h, h> = -rate ||h_perp||^2.
    let lhs = d.inner(&ch, &h).unwrap();
    assert!((lhs + 1.5 * d.norm_perp(&h).powi(2)).abs() < 1e-14);
}

#[test]
fn exact_flow_matches_exponential() {
    let d = common::disc(&common::harmonic(1), 32, 6);
    let bgk = BgkOperator::new(&d, 0.7).unwrap();
    let h = random_perturbation(&d, 9);
    let mut g = h.clone();
    bgk.exact_step(&mut g, 1.3);
    assert!((d.norm_perp(&g) - (-0.7f64 * 1.3).exp() * d.norm_perp(&h)).abs() < 1e-15);
    assert!(d.norm(&macro_part(&d, &g).sub(&macro_part(&d, &h)).unwrap()) == 0.0);
}

#[test]
fn shape_checked() {
    let d = common::disc(&common::harmonic(1), 32, 4);
    let bgk = BgkOperator::new(&d, 1.0).unwrap();
    let bad = kinmodes::basis::KineticState::zeros(32, 2);
    assert!(matches!(bgk.apply(&bad), Err(Error::ShapeMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn projection_identities(seed in 0u64..10_000, dim in 1usize..=2) {
        let d = common::disc(&common::harmonic(dim), if dim == 1 { 40 } else { 12 }, 5);
        let h = random_perturbation(&d, seed);
        let (fields, perp) = micro_projection(&d, &h);
        let (_, perp2) = micro_projection(&d, &perp);
        prop_assert!(d.norm(&perp2.sub(&perp).unwrap()) == 0.0);
        // Pythagoras: ||h||^2 = ||r||^2 + ||m||^2 + ||e||^2 + ||h_perp||^2.
        let m2: f64 = fields.m.iter().map(|m| d.field_norm(m).powi(2)).sum();
        let total = d.field_norm(&fields.r).powi(2) + m2 + d.field_norm(&fields.e).powi(2) + d.norm(&perp).powi(2);
        prop_assert!((d.norm(&h).powi(2) - total).abs() <= 1e-12 * d.norm(&h).powi(2));
        let back = d.from_macro(&fields.r, &fields.m, &fields.e);
        prop_assert!(d.norm(&back.sub(&macro_part(&d, &h)).unwrap()) == 0.0);
    }

    #[test]
    fn inner_product_is_symmetric_and_positive(a in 0u64..1000, b in 0u64..1000) {
        let d = common::disc(&common::quartic(), 48, 5);
        let x = random_perturbation(&d, a);
        let y = random_perturbation(&d, b);
        prop_assert!((d.inner(&x, &y).unwrap() - d.inner(&y, &x).unwrap()).abs() < 1e-14);
        prop_assert!(d.inner(&x, &x).unwrap() > 0.0);
        prop_assert!(d.inner(&x, &y).unwrap().abs() <= d.norm(&x) * d.norm(&y) * (1.0 + 1e-14));
    }
}
