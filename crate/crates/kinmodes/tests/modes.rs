mod common;

use kinmodes::collision::BgkOperator;
use kinmodes::evolve::{Evolver, IntegratorConfig};
use kinmodes::initial::{random_perturbation, InitialDatum};
use kinmodes::modes::*;
use kinmodes::potential::Family;
use kinmodes::Error;
use nalgebra::DMatrix;

fn gram_error(pot: &std::sync::Arc<kinmodes::potential::Potential>, n: usize) -> (Vec<String>, f64) {
    let sym = common::symmetry(pot);
    let d = common::disc(pot, n, 4);
    let gens = generators(&d, &sym).unwrap();
    let g = orthonormality_gram(&d, &gens).unwrap();
    let k = g.nrows();
    (gens.names, (g - DMatrix::identity(k, k)).amax())
}

#[test]
fn generator_families() {
    let (names, err) = gram_error(&common::harmonic(1), 128);
    assert_eq!(names, ["maxwellian", "energy", "directional+_1", "directional-_1", "pulsating+", "pulsating-"]);
    assert!(err < 1e-8);
    let (names, err) = gram_error(&common::harmonic(2), 32);
    assert_eq!(names.len(), 2 + 1 + 4 + 2);
    assert!(err < 1e-8);
    let (names, err) = gram_error(&common::radial(), 40);
    assert_eq!(names, ["maxwellian", "energy", "rotation_1"]);
    assert!(err < 1e-8);
    let (names, _) = gram_error(&common::quartic(), 96);
    assert_eq!(names, ["maxwellian", "energy"]);
}

#[test]
fn conserved_mode_recovers_combinations() {
    let pot = common::harmonic(2);
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 32, 4);
    let gens = generators(&d, &sym).unwrap();
    let coef: Vec<f64> = (0..gens.states.len()).map(|k| 0.3 - 0.1 * k as f64).collect();
    let mut h = d.zeros();
    for (c, s) in coef.iter().zip(&gens.states) {
        h.axpy(*c, s).unwrap();
    }
    let mode = conserved_mode(&d, &h, Some(&sym)).unwrap();
    let back = evaluate_mode(&d, &mode, 0.0);
    assert!(d.norm(&back.sub(&h).unwrap()) < 1e-8 * d.norm(&h));
}

#[test]
fn mode_equations_hold_over_time() {
    let pot = common::harmonic(1);
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 128, 6);
    let h0 = random_perturbation(&d, 2);
    let mode = conserved_mode(&d, &h0, Some(&sym)).unwrap();
    for t in [0.0, 0.4, 1.7, 5.0] {
        let r = residual_mode_system(&d, &mode, t).unwrap();
        assert!(r.max() < 1e-8, "t = {t}: {r:?}");
    }
    let o = ode_check(&d, &mode, &[0.0, 0.5, 2.0]);
    assert!(o.equation < 1e-8 && o.b_oscillator < 1e-12 && o.c_oscillator < 1e-12, "{o:?}");
}

#[test]
fn generic_potential_keeps_mass_and_energy_only() {
    let pot = common::quartic();
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 96, 6);
    for seed in 0..5 {
        let mode = conserved_mode(&d, &random_perturbation(&d, seed), Some(&sym)).unwrap();
        assert!(mode.alpha != 0.0 && mode.beta != 0.0);
        assert!(mode.gamma.iter().chain(&mode.gamma_bar).all(|v| *v == 0.0));
        assert!(mode.delta == 0.0 && mode.delta_bar == 0.0 && mode.rotation.amax() == 0.0);
    }
}

#[test]
fn pulsating_rejected_on_partially_harmonic_potential() {
    let t = kinmodes::potential::PolyTable::from_terms(2, &[(vec![2, 0], 0.5), (vec![0, 2], 0.5), (vec![0, 4], 0.25)]);
    let pot = common::potential(2, Family::Polynomial(t), false);
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 24, 4);
    let r = InitialDatum::Mode("pulsating+".into()).build(&d, &sym, 0);
    assert!(matches!(r, Err(Error::ClassificationError(_))));
    assert!(InitialDatum::Mode("directional+_1".into()).build(&d, &sym, 0).is_ok());
}

#[test]
fn rotation_mode_is_stationary() {
    let pot = common::radial();
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 96, 4);
    let h0 = InitialDatum::Mode("rotation_1".into()).build(&d, &sym, 0).unwrap();
    let mode = conserved_mode(&d, &h0, Some(&sym)).unwrap();
    assert!(mode.is_stationary());
    let bgk = BgkOperator::new(&d, 1.0).unwrap();
    let cfg = IntegratorConfig { dt: 8e-3, t_end: 1.0, output_stride: 25, ..Default::default() };
    let traj = Evolver::new(&d, bgk, cfg).unwrap().run(&h0, &mode, &sym, None).unwrap();
    let worst = traj.column(|r| r.dist_mode).into_iter().fold(0.0f64, f64::max);
    assert!(worst < 1e-6, "{worst}");
}
