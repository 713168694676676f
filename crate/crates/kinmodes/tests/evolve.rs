mod common;

use kinmodes::collision::BgkOperator;
use kinmodes::evolve::*;
use kinmodes::initial::random_perturbation;
use kinmodes::modes::conserved_mode;
use kinmodes::Error;
use proptest::prelude::*;

fn run_csv(seed: u64) -> Vec<u8> {
    let pot = common::harmonic(1);
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 64, 6);
    let h0 = random_perturbation(&d, seed);
    let mode = conserved_mode(&d, &h0, Some(&sym)).unwrap();
    let cfg = IntegratorConfig { dt: 5e-3, t_end: 1.0, output_stride: 10, ..Default::default() };
    let traj = Evolver::new(&d, BgkOperator::new(&d, 1.0).unwrap(), cfg).unwrap().run(&h0, &mode, &sym, None).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn csv_is_deterministic_and_has_the_documented_header() {
    let a = run_csv(3);
    assert_eq!(a, run_csv(3));
    assert_ne!(a, run_csv(4));
    let text = String::from_utf8(a).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "t,norm_h,norm_hperp,norm_r,norm_m,norm_e,dist_mode,mass,energy,dir_x_1,dir_v_1,pul_xv,pul_x2v2"
    );
    assert_eq!(text.lines().count(), 1 + 21);
}

#[test]
fn snapshot_round_trip() {
    let pot = common::harmonic(2);
    let d = common::disc(&pot, 12, 4);
    let mut h = random_perturbation(&d, 5);
    h.t = 0.25;
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s");
    write_snapshot(&d, &h, &p).unwrap();
    let header = std::fs::read_to_string(p.with_extension("txt")).unwrap();
    assert!(header.contains("dtype = f64-le"));
    assert!(header.contains(&format!("dims = {} {}", h.n_modes, h.n_nodes)));
    assert!(header.contains("ordering = mode-major"));
    let back = read_snapshot(&p).unwrap();
    assert_eq!(back.data, h.data);
    assert_eq!(back.t, 0.25);
    std::fs::write(p.with_extension("bin"), [0u8; 16]).unwrap();
    assert!(matches!(read_snapshot(&p), Err(Error::ShapeMismatch(_))));
}

#[test]
fn cfl_violation_reported() {
    let pot = common::harmonic(1);
    let d = common::disc(&pot, 128, 8);
    let cfg = IntegratorConfig { dt: 0.5, ..Default::default() };
    assert!(matches!(Evolver::new(&d, BgkOperator::new(&d, 1.0).unwrap(), cfg), Err(Error::CflViolation(_))));
}

#[test]
fn split_and_unsplit_schemes_agree() {
    let pot = common::quartic();
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 96, 6);
    let h0 = random_perturbation(&d, 8);
    let mode = conserved_mode(&d, &h0, Some(&sym)).unwrap();
    let bgk = BgkOperator::new(&d, 1.0).unwrap();
    let mut out = Vec::new();
    for scheme in [Scheme::Strang, Scheme::Rk4Full] {
        let cfg = IntegratorConfig { dt: 2e-3, t_end: 1.0, output_stride: 500, scheme, ..Default::default() };
        let traj = Evolver::new(&d, bgk, cfg).unwrap().run(&h0, &mode, &sym, None).unwrap();
        out.push(traj.records.last().unwrap().norm_h);
    }
    assert!((out[0] - out[1]).abs() < 1e-6 * out[0], "{out:?}");
}

#[test]
fn macroscopic_equations_between_steps() {
    let pot = common::harmonic(1);
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 96, 8);
    let h0 = random_perturbation(&d, 1);
    let mode = conserved_mode(&d, &h0, Some(&sym)).unwrap();
    let bgk = BgkOperator::new(&d, 1.0).unwrap();
    let mut res = Vec::new();
    for dt in [2e-3, 1e-3] {
        let ev = Evolver::new(&d, bgk, IntegratorConfig { dt, t_end: dt, output_stride: 1, ..Default::default() }).unwrap();
        let mut h = h0.clone();
        ev.step(&mut h, dt);
        res.push(macroscopic_residuals(&d, &h0, &h, dt, 1.0).unwrap());
    }
    // Midpoint differences are second order in dt.
    for (a, b) in [(res[0].r, res[1].r), (res[0].m, res[1].m), (res[0].e, res[1].e)] {
        assert!(b < 1e-4 && a / b > 3.0, "{a:e} {b:e}");
    }
    let _ = mode;
}

#[test]
fn conservation_drift_is_small() {
    let pot = common::harmonic(1);
    let sym = common::symmetry(&pot);
    let d = common::disc(&pot, 128, 8);
    let h0 = random_perturbation(&d, 6);
    let mode = conserved_mode(&d, &h0, Some(&sym)).unwrap();
    let cfg = IntegratorConfig { dt: 2e-3, t_end: 5.0, output_stride: 50, ..Default::default() };
    let traj = Evolver::new(&d, BgkOperator::new(&d, 1.0).unwrap(), cfg).unwrap().run(&h0, &mode, &sym, None).unwrap();
    let names: Vec<String> = traj.conservation_drift().into_iter().map(|(n, v)| {
        assert!(v < 1e-8 * d.norm(&h0), "{n}: {v:e}");
        n
    }).collect();
    assert_eq!(names.len(), 6);
}

#[test]
fn frequency_fit_on_noisy_cosine() {
    let t: Vec<f64> = (0..600).map(|k| k as f64 * 0.02).collect();
    let y: Vec<f64> = t.iter().enumerate().map(|(i, s)| (2.0 * s).cos() + 1e-6 * ((i * 7919) % 13) as f64).collect();
    assert!((fit_frequency(&t, &y, 0.5, 4.0) - 2.0).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn transport_is_skew_in_the_discrete_product(a in 0u64..1000, b in 0u64..1000) {
        let pot = common::quartic();
        let d = common::disc(&pot, 64, 6);
        let x = random_perturbation(&d, a);
        let y = random_perturbation(&d, b);
        let tx = transport_apply(&d, &x).unwrap();
        let ty = transport_apply(&d, &y).unwrap();
        let s = d.inner(&tx, &y).unwrap() + d.inner(&x, &ty).unwrap();
        prop_assert!(s.abs() < 1e-12 * d.norm(&tx) * d.norm(&y));
    }

    #[test]
    fn strang_never_increases_the_norm(seed in 0u64..1000) {
        let pot = common::harmonic(1);
        let d = common::disc(&pot, 48, 6);
        let bgk = BgkOperator::new(&d, 1.0).unwrap();
        let ev = Evolver::new(&d, bgk, IntegratorConfig { dt: 5e-3, ..Default::default() }).unwrap();
        let mut h = random_perturbation(&d, seed);
        let n0 = d.norm(&h);
        for _ in 0..20 {
            ev.step(&mut h, 5e-3);
        }
        prop_assert!(d.norm(&h) <= n0 * (1.0 + 1e-13));
    }
}
