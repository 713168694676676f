//! Acceptance criteria, one pass/fail line each. Lines go straight to the
//! process stdout so they show up without `--nocapture`.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;

use kinmodes::basis::Discretization;
use kinmodes::cli::{adjoint_order, Setup};
use kinmodes::collision::{micro_projection, BgkOperator};
use kinmodes::config::RunConfig;
use kinmodes::diagnostics::{htheorem_check, pythagoras_defect, summarize, LyapunovTracker, LyapunovWeights, HTHEOREM_BUDGET};
use kinmodes::evolve::{fit_frequency, transport_apply, Evolver, IntegratorConfig, Trajectory};
use kinmodes::initial::{random_perturbation, InitialDatum};
use kinmodes::modes::{conserved_mode, generators, orthonormality_gram};
use kinmodes::potential::{rotation_grams, Family, Potential};
use kinmodes::spectral::{fit_decay, poincare_constant, rigidity_constant, DecayFit};
use kinmodes::witten::{SpectrumRequest, WittenOperator};

struct Report {
    lines: Vec<(String, bool)>,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        let text = format!("criterion {id:<3} {}  {detail}", if ok { "PASS" } else { "FAIL" });
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{text}");
        let _ = out.flush();
        self.lines.push((text, ok));
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn worst_drift(traj: &Trajectory, h0_norm: f64) -> f64 {
    traj.conservation_drift().into_iter().map(|(_, v)| v / h0_norm).fold(0.0, f64::max)
}

fn worst_pythagoras(traj: &Trajectory) -> f64 {
    traj.records.iter().map(|r| pythagoras_defect(r) / r.norm_h.powi(2).max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

/// Criterion 5 run plus what criteria 4, 6, 9 and 10 read from it.
struct DecayRun {
    label: &'static str,
    fit: Option<DecayFit>,
    ratio: f64,
    drift: f64,
    htheorem: f64,
    pythagoras: f64,
    /// `(min F2/|h|^2, max F2/|h|^2, largest relative increase after 3/rate)`
    lyapunov: Option<(f64, f64, f64)>,
    seconds: f64,
}

fn decay_run(label: &'static str, preset: &str) -> DecayRun {
    let start = Instant::now();
    let cfg = RunConfig::preset(preset).unwrap();
    let s = Setup::new(&cfg).unwrap();
    let disc = &s.disc;
    let rate = cfg.collision.rate;
    let h0 = cfg.initial_datum().unwrap().build(disc, &s.sym, cfg.seed).unwrap();
    let mode = conserved_mode(disc, &h0, Some(&s.sym)).unwrap();
    let bgk = BgkOperator::new(disc, rate).unwrap();
    let ev = Evolver::new(disc, bgk, cfg.integrator.to_config()).unwrap();
    let (traj, lyapunov) = if disc.dim() == 1 {
        let omega = WittenOperator::new(&disc.grid, SpectrumRequest::Dense).unwrap();
        let mut tracker = LyapunovTracker::new(disc, &omega, bgk, mode.clone(), LyapunovWeights::from_eps(1e-2));
        let traj = ev.run(&h0, &mode, &s.sym, Some(&mut tracker)).unwrap();
        let sm = summarize(&tracker.records, 3.0 / rate);
        (traj, Some((sm.min_ratio, sm.max_ratio, sm.max_increase)))
    } else {
        (ev.run(&h0, &mode, &s.sym, None).unwrap(), None)
    };
    let dist = traj.column(|r| r.dist_mode);
    DecayRun {
        label,
        fit: fit_decay(&traj, None).ok(),
        ratio: dist.last().unwrap() / dist[0],
        drift: worst_drift(&traj, disc.norm(&h0)),
        htheorem: htheorem_check(&traj, HTHEOREM_BUDGET).max_violation,
        pythagoras: worst_pythagoras(&traj),
        lyapunov,
        seconds: secs(start),
    }
}

/// `<(grad phi . J x)^2> / <|J x|^2>` over a sweep of `theta J`, by a tensor trapezoid rule.
fn rayleigh_sweep(pot: &Potential) -> f64 {
    let (l, n) = (9.0, 301);
    let h = 2.0 * l / (n - 1) as f64;
    let mut best = f64::INFINITY;
    for theta in [0.25, 0.5, 1.0, 2.0, -1.5] {
        let (mut num, mut den) = (0.0, 0.0);
        let mut g = [0.0; 2];
        for i in 0..n {
            for j in 0..n {
                let x = [-l + i as f64 * h, -l + j as f64 * h];
                let w = (-pot.phi(&x)).exp();
                pot.grad(&x, &mut g);
                let ax = [theta * x[1], -theta * x[0]];
                num += w * (g[0] * ax[0] + g[1] * ax[1]).powi(2);
                den += w * (ax[0] * ax[0] + ax[1] * ax[1]);
            }
        }
        best = best.min(num / den);
    }
    best
}

fn gram_error(disc: &Discretization, sym: &kinmodes::potential::SymmetryStructure) -> f64 {
    let gens = generators(disc, sym).unwrap();
    let g = orthonormality_gram(disc, &gens).unwrap();
    let k = g.nrows();
    (g - DMatrix::<f64>::identity(k, k)).amax()
}

/// Generator carried along its mode to `4 pi`; returns the worst distance
/// and the fitted frequency of the oscillating moment, if any.
fn generator_run(disc: &Discretization, sym: &kinmodes::potential::SymmetryStructure, name: &str, dt: f64) -> (f64, Option<f64>, f64) {
    let start = Instant::now();
    let h0 = InitialDatum::Mode(name.into()).build(disc, sym, 0).unwrap();
    let mode = conserved_mode(disc, &h0, Some(sym)).unwrap();
    let bgk = BgkOperator::new(disc, 1.0).unwrap();
    let cfg = IntegratorConfig { dt, t_end: 4.0 * PI, output_stride: (0.02 / dt).round().max(1.0) as usize, ..Default::default() };
    let traj = Evolver::new(disc, bgk, cfg).unwrap().run(&h0, &mode, sym, None).unwrap();
    let worst = traj.column(|r| r.dist_mode).into_iter().fold(0.0f64, f64::max) / disc.norm(&h0);
    let t = traj.times();
    let freq = if name.starts_with("directional") {
        Some(fit_frequency(&t, &traj.column(|r| r.dir_x[0]), 0.5, 3.0))
    } else if name.starts_with("pulsating") {
        Some(fit_frequency(&t, &traj.column(|r| r.pul_xv), 0.5, 3.0))
    } else {
        None
    };
    (worst, freq, secs(start))
}

#[test]
fn acceptance() {
    let mut rep = Report { lines: Vec::new() };

    // 1. Poincare constant of the harmonic well.
    let start = Instant::now();
    let pot = common::harmonic(1);
    let disc = Discretization::new(pot, 512, Some(10.0), 4).unwrap();
    let omega = WittenOperator::new(&disc.grid, SpectrumRequest::Dense).unwrap();
    let c_p = poincare_constant(&omega, &disc.grid.w).unwrap().c_p;
    let t = secs(start);
    rep.line("1", (c_p - 1.0).abs() <= 1e-4 && t < 10.0, format!("c_P = {c_p:.9} ({t:.2} s)"));

    // 2. Orthonormality of the generators.
    let start = Instant::now();
    let pot = common::harmonic(1);
    let e1 = gram_error(&common::disc(&pot, 128, 8), &common::symmetry(&pot));
    let pot = common::radial();
    let e2 = gram_error(&common::disc(&pot, 96, 6), &common::symmetry(&pot));
    let t = secs(start);
    rep.line("2", e1 <= 1e-8 && e2 <= 1e-8 && t < 5.0, format!("Gram error {e1:.2e} (harmonic d=1), {e2:.2e} (radial d=2) ({t:.2} s)"));

    // 3. Every generator stays on its mode up to 4 pi.
    let pot = common::harmonic(1);
    let sym = common::symmetry(&pot);
    let disc = common::disc(&pot, 256, 8);
    let mut ok3 = true;
    let mut parts = Vec::new();
    for name in generators(&disc, &sym).unwrap().names {
        let (dist, freq, t) = generator_run(&disc, &sym, &name, 1e-3);
        let target = if name.starts_with("directional") { 1.0 } else { 2.0 };
        let freq_ok = freq.is_none_or(|f| (f - target).abs() <= 1e-3 * target);
        ok3 &= dist <= 1e-6 && freq_ok && t < 300.0;
        parts.push(match freq {
            Some(f) => format!("{name} {dist:.1e} f={f:.6}"),
            None => format!("{name} {dist:.1e}"),
        });
    }
    let pot = common::radial();
    let sym = common::symmetry(&pot);
    let disc = common::disc(&pot, 96, 8);
    let (dist, _, t) = generator_run(&disc, &sym, "rotation_1", 6e-3);
    ok3 &= dist <= 1e-6 && t < 300.0;
    parts.push(format!("rotation_1 (radial d=2) {dist:.1e}"));
    rep.line("3", ok3, parts.join("; "));

    // 5. Decay on the four reference wells; 4, 6, 9 read the same runs.
    let runs = [
        decay_run("harmonic d=1", "harmonic-d1"),
        decay_run("quartic d=1", "quartic-d1"),
        decay_run("radial d=2", "radial-d2"),
        decay_run("anisotropic d=2", "aniso-d2"),
    ];
    let drift = runs.iter().map(|r| r.drift).fold(0.0, f64::max);
    rep.line("4", drift < 1e-8, format!("worst drift per unit time {drift:.2e} x |h0|"));
    for (r, id) in runs.iter().zip(["5a", "5b", "5c", "5d"]) {
        let limit = if id == "5a" || id == "5b" { 600.0 } else { 3600.0 };
        let (kappa, r2) = r.fit.as_ref().map(|f| (f.kappa, f.r2)).unwrap_or((f64::NAN, f64::NAN));
        let ok = kappa > 0.0 && r2 > 0.99 && r.ratio < 1e-3 && r.seconds < limit;
        rep.line(id, ok, format!("{}: kappa {kappa:.4}, R^2 {r2:.5}, final/initial {:.2e} ({:.0} s)", r.label, r.ratio, r.seconds));
    }
    let ht = runs.iter().map(|r| r.htheorem).fold(f64::NEG_INFINITY, f64::max);
    rep.line("6", ht <= HTHEOREM_BUDGET, format!("largest energy excess {ht:.2e} x |h0|^2 per output"));

    // 7. Rigidity constant of the (1, 2) well.
    let start = Instant::now();
    let pot = common::potential(2, Family::AnisotropicHarmonic { p: vec![1.0, 2f64.sqrt()] }, true);
    let c_k = rigidity_constant(&pot, &common::symmetry(&pot)).unwrap().c_k;
    let oracle = rayleigh_sweep(&pot);
    let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let (g, m) = rotation_grams(&pot, &[j]);
    let t = secs(start);
    let ok = (c_k - 1.0 / 3.0).abs() <= 1e-6 && (c_k - oracle).abs() <= 1e-6 && t < 5.0;
    rep.line("7", ok, format!("c_K = {c_k:.10}, sweep {oracle:.10}, J quotient {:.10} ({t:.2} s)", g[(0, 0)] / m[(0, 0)]));

    // 8. Generic wells keep only mass and energy.
    let pot = common::quartic();
    let sym = common::symmetry(&pot);
    let disc = common::disc(&pot, 128, 8);
    let mut only_ab = true;
    for seed in 0..20 {
        let m = conserved_mode(&disc, &random_perturbation(&disc, seed), Some(&sym)).unwrap();
        only_ab &= m.rotation.iter().all(|v| *v == 0.0) && m.gamma.iter().chain(&m.gamma_bar).all(|v| *v == 0.0) && m.delta == 0.0 && m.delta_bar == 0.0;
    }
    // x v M would be a directional mode in a harmonic well.
    let mut h0 = disc.zeros();
    h0.slot_mut(1).copy_from_slice(&disc.grid.coordinate(0));
    let mode = conserved_mode(&disc, &h0, Some(&sym)).unwrap();
    let bgk = BgkOperator::new(&disc, 1.0).unwrap();
    let cfg = IntegratorConfig { dt: 2e-3, t_end: 60.0, output_stride: 50, ..Default::default() };
    let traj = Evolver::new(&disc, bgk, cfg).unwrap().run(&h0, &mode, &sym, None).unwrap();
    let d = traj.column(|r| r.dist_mode);
    let (d0, d1) = (d[0], *d.last().unwrap());
    let kappa = fit_decay(&traj, None).map(|f| f.kappa).unwrap_or(f64::NAN);
    let ok = only_ab && d0 > 0.1 * disc.norm(&h0) && d1 < 0.1 * d0 && kappa > 0.0;
    rep.line(
        "8",
        ok,
        format!("quartic: only (alpha, beta) on 20 data = {only_ab}; directional datum dist {d0:.3e} -> {d1:.3e}, kappa {kappa:.4}"),
    );

    // 9. Modified entropy on the d=1 runs.
    let mut ok9 = true;
    let mut parts = Vec::new();
    for r in runs.iter().filter(|r| r.lyapunov.is_some()) {
        let (lo, hi, inc) = r.lyapunov.unwrap();
        ok9 &= lo >= 0.5 && hi <= 2.0 && inc <= 1e-6;
        parts.push(format!("{}: F2/|h|^2 in [{lo:.4}, {hi:.4}], max increase {inc:.2e}", r.label));
    }
    rep.line("9", ok9, parts.join("; "));

    // 10. Projections and transport.
    let mut ok10 = true;
    let mut worst_idem = 0.0f64;
    let mut worst_skew = 0.0f64;
    let mut order = f64::INFINITY;
    for pot in [common::harmonic(1), common::quartic(), common::radial()] {
        let n = if pot.dim == 1 { 128 } else { 24 };
        let disc = common::disc(&pot, n, 6);
        let h = random_perturbation(&disc, 3);
        let g = random_perturbation(&disc, 4);
        let (_, perp) = micro_projection(&disc, &h);
        let (_, perp2) = micro_projection(&disc, &perp);
        worst_idem = worst_idem.max(disc.norm(&perp2.sub(&perp).unwrap()) / disc.norm(&h));
        let th = transport_apply(&disc, &h).unwrap();
        let tg = transport_apply(&disc, &g).unwrap();
        let s = (disc.inner(&th, &g).unwrap() + disc.inner(&h, &tg).unwrap()).abs() / (disc.norm(&th) * disc.norm(&g));
        worst_skew = worst_skew.max(s);
        let probe = if pot.dim == 1 { 64 } else { 24 };
        order = order.min(adjoint_order(&pot, probe, &disc.grid.half_widths).2);
    }
    let pyth = runs.iter().map(|r| r.pythagoras).fold(0.0, f64::max);
    ok10 &= worst_idem <= 1e-12 && pyth <= 1e-12 && worst_skew <= 1e-12 && order >= 3.5;
    rep.line(
        "10",
        ok10,
        format!("idempotence {worst_idem:.1e}, Pythagoras {pyth:.1e}, skew defect {worst_skew:.1e}, adjoint order {order:.2}"),
    );

    let failed: Vec<&String> = rep.lines.iter().filter(|(_, ok)| !ok).map(|(s, _)| s).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n"));
}
