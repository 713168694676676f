//! Scenario orchestration behind the `kinmodes` binary: evolve, modes,
//! constants and verify, each returning named checks and writing artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use crate::basis::Discretization;
use crate::collision::{micro_projection, BgkOperator};
use crate::config::RunConfig;
use crate::diagnostics::{htheorem_check, pythagoras_defect, summarize, LyapunovTracker, LyapunovWeights};
use crate::error::{Error, Result};
use crate::evolve::{transport_apply, write_snapshot, Evolver, IntegratorConfig, Observer, Trajectory};
use crate::grid::SpatialGrid;
use crate::initial::{random_perturbation, InitialDatum};
use crate::modes::{conserved_mode, generators, orthonormality_gram, residual_mode_system, SpecialMode};
use crate::potential::{Potential, SymmetryStructure, DEFAULT_RANK_TOL};
use crate::spectral::{fit_decay, poincare_constant, rigidity_constant, DecayFit, SpectralReport};
use crate::witten::{verify_functional_inequalities, WittenOperator};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "KINMODES_THREADS";

/// Largest Gram defect accepted for the mode generators.
pub const GRAM_TOL: f64 = 1e-8;
/// Largest residual of the macroscopic mode equations on a generator.
pub const MODE_RESIDUAL_TOL: f64 = 1e-6;
/// Largest `||h(t) - h^par(t)||` of a generator evolved by `verify`.
pub const MODE_DIST_TOL: f64 = 1e-6;
/// Smallest observed order of the weighted adjoint under grid halving.
pub const ADJOINT_ORDER_MIN: f64 = 3.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Evolve,
    Modes,
    Constants,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Modes => "modes",
            Command::Constants => "constants",
            Command::Verify => "verify",
        }
    }
}

/// One named invariant, with the module that owns it.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub invariant: String,
    pub module: &'static str,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(invariant: impl Into<String>, module: &'static str, value: f64, threshold: f64) -> Self {
        Check { invariant: invariant.into(), module, passed: value <= threshold, value, threshold, detail: String::new() }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(invariant: impl Into<String>, module: &'static str, value: f64, threshold: f64) -> Self {
        Check { invariant: invariant.into(), module, passed: value >= threshold, value, threshold, detail: String::new() }
    }

    pub fn flag(invariant: impl Into<String>, module: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        let v = if passed { 1.0 } else { 0.0 };
        Check { invariant: invariant.into(), module, passed, value: v, threshold: 1.0, detail: detail.into() }
    }

    pub fn from_error(invariant: impl Into<String>, e: &Error) -> Self {
        Check {
            invariant: invariant.into(),
            module: e.owner(),
            passed: false,
            value: f64::NAN,
            threshold: f64::NAN,
            detail: format!("{}: {e}", e.kind()),
        }
    }

    fn with(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Result of one command on one configuration.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub command: String,
    /// Sweep label, empty for a single run.
    pub label: String,
    pub checks: Vec<Check>,
    /// `key = value` lines of the summary file.
    pub summary: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
    pub fit: Option<DecayFit>,
    pub report: Option<SpectralReport>,
}

impl Outcome {
    fn new(cmd: Command) -> Self {
        Outcome { command: cmd.name().into(), ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn put(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    /// Aligned pass/fail table.
    pub fn table(&self) -> String {
        let w = self.checks.iter().map(|c| c.invariant.len()).max().unwrap_or(9).max(9);
        let mut s = String::new();
        let _ = writeln!(s, "{:<6} {:<w$} {:<12} {:>12} {:>12}  detail", "status", "invariant", "module", "value", "threshold");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<6} {:<w$} {:<12} {:>12.4e} {:>12.4e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.invariant,
                c.module,
                c.value,
                c.threshold,
                c.detail
            );
        }
        s
    }

    /// `{"command", "run", "failures": [{invariant, module, value, threshold, detail}]}`
    pub fn failures_json(&self) -> serde_json::Value {
        let num = |v: f64| if v.is_finite() { json!(v) } else { serde_json::Value::Null };
        json!({
            "command": self.command,
            "run": self.label,
            "failures": self.failures().iter().map(|c| json!({
                "invariant": c.invariant,
                "module": c.module,
                "value": num(c.value),
                "threshold": num(c.threshold),
                "detail": c.detail,
            })).collect::<Vec<_>>(),
        })
    }

    fn summary_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "checks_passed = {}", self.checks.iter().filter(|c| c.passed).count());
        let _ = writeln!(s, "checks_failed = {}", self.failures().len());
        s
    }

    fn write_files(&mut self, out: &Path) -> Result<()> {
        let p = out.join("summary.txt");
        std::fs::write(&p, self.summary_text())?;
        self.artifacts.push(p);
        let p = out.join("checks.txt");
        std::fs::write(&p, self.table())?;
        self.artifacts.push(p);
        if !self.passed() {
            let p = out.join("failures.json");
            std::fs::write(&p, serde_json::to_string_pretty(&self.failures_json()).expect("json"))?;
            self.artifacts.push(p);
        }
        Ok(())
    }
}

/// Thread count: the environment variable wins, then the flag, then all cores.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    let env = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    env.or(flag.filter(|&n| n > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Potential, symmetries and discretization of a configuration.
pub struct Setup {
    pub pot: Arc<Potential>,
    pub sym: SymmetryStructure,
    pub disc: Discretization,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let pot = Arc::new(cfg.normalized_potential()?);
        let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
        let disc = cfg.discretization(pot.clone())?;
        Ok(Setup { pot, sym, disc })
    }
}

/// Runs `cmd` on every point of the sweep, in parallel, and writes the artifacts.
///
/// A single run writes into `out`; sweep points go to `out/run_NNN`.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path, threads: usize) -> Result<Vec<Outcome>> {
    let runs = cfg.expand_sweep()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let single = runs.len() == 1;
    let outcomes: Vec<Outcome> = pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(k, (label, c))| {
                let dir = if single { out.to_path_buf() } else { out.join(format!("run_{k:03}")) };
                let mut o = run_one(cmd, c, &dir);
                o.label = label.clone();
                o
            })
            .collect()
    });
    if !single {
        let mut s = String::from("run,label,passed,kappa,r2\n");
        for (k, o) in outcomes.iter().enumerate() {
            let (kappa, r2) = o.fit.as_ref().map(|f| (f.kappa, f.r2)).unwrap_or((f64::NAN, f64::NAN));
            let _ = writeln!(s, "run_{k:03},\"{}\",{},{kappa:.9e},{r2:.9}", o.label, o.passed());
        }
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("sweep.csv"), s)?;
    }
    Ok(outcomes)
}

/// One command on one configuration; errors become failed checks.
pub fn run_one(cmd: Command, cfg: &RunConfig, out: &Path) -> Outcome {
    let result = std::fs::create_dir_all(out).map_err(Error::from).and_then(|_| match cmd {
        Command::Evolve => cmd_evolve(cfg, out),
        Command::Modes => cmd_modes(cfg, out),
        Command::Constants => cmd_constants(cfg, out),
        Command::Verify => cmd_verify(cfg, out),
    });
    let mut o = match result {
        Ok(o) => o,
        Err(e) => {
            let mut o = Outcome::new(cmd);
            o.checks.push(Check::from_error(format!("{} completes", cmd.name()), &e));
            o
        }
    };
    if let Err(e) = o.write_files(out) {
        o.checks.push(Check::from_error("artifacts written", &e));
    }
    o
}

fn mode_lines(mode: &SpecialMode) -> Vec<(String, String)> {
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(" ");
    let rot: Vec<f64> = mode.rotation.iter().copied().collect();
    vec![
        ("mode_alpha".into(), format!("{:.12e}", mode.alpha)),
        ("mode_beta".into(), format!("{:.12e}", mode.beta)),
        ("mode_rotation".into(), list(&rot)),
        ("mode_gamma".into(), list(&mode.gamma)),
        ("mode_gamma_bar".into(), list(&mode.gamma_bar)),
        ("mode_delta".into(), format!("{:.12e}", mode.delta)),
        ("mode_delta_bar".into(), format!("{:.12e}", mode.delta_bar)),
    ]
}

fn describe(o: &mut Outcome, cfg: &RunConfig, s: &Setup) {
    o.put("preset", cfg.preset.as_deref().unwrap_or("none"));
    o.put("seed", cfg.seed);
    o.put("threads", rayon::current_num_threads());
    o.put("family", s.pot.raw.family.name());
    o.put("dim", s.disc.dim());
    o.put("n_x", s.disc.grid.n);
    o.put("n_v", s.disc.vel.order);
    let w: Vec<String> = s.disc.grid.half_widths.iter().map(|l| format!("{l:.6}")).collect();
    o.put("half_widths", w.join(" "));
    o.put("harmonic_axes", format!("{:?}", s.sym.harmonic_indices));
    o.put("rotations", s.sym.rotation_basis.len());
}

fn drift_checks(traj: &Trajectory, norm0: f64, tol: f64) -> Vec<Check> {
    traj.conservation_drift()
        .into_iter()
        .map(|(name, v)| Check::at_most(format!("conservation drift of {name}"), "evolve", v, tol * norm0.max(f64::MIN_POSITIVE)))
        .collect()
}

/// Builds the spectral report; `omega` is reused when already available.
fn spectral_report(cfg: &RunConfig, s: &Setup, omega: &WittenOperator, fit: Option<DecayFit>) -> Result<SpectralReport> {
    let p = poincare_constant(omega, &s.disc.grid.w)?;
    let rig = match rigidity_constant(&s.pot, &s.sym) {
        Ok(r) => Some(r),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let samples = cfg.diagnostics.inequality_samples;
    let inequalities = (samples > 0).then(|| verify_functional_inequalities(&s.disc.grid, omega, samples, cfg.seed));
    Ok(SpectralReport {
        c_p: p.c_p,
        c_p_residual: p.residual,
        c_k: rig.as_ref().map(|r| r.c_k),
        c_k_matrix: rig.map(|r| r.matrix),
        c_collision: cfg.collision.rate,
        fit,
        moments: s.pot.moments.clone(),
        inequalities,
    })
}

fn spectral_checks(rep: &SpectralReport) -> Vec<Check> {
    let mut v = vec![
        Check::at_least("Poincare constant positive", "spectral", rep.c_p, f64::MIN_POSITIVE),
        Check::flag("spectral report consistent", "spectral", rep.consistent(), "kappa <= rate, c_P > 0, c_K > 0"),
    ];
    if let Some(c) = rep.c_k {
        v.push(Check::at_least("rigidity constant positive", "spectral", c, f64::MIN_POSITIVE));
    }
    if let Some(q) = &rep.inequalities {
        v.push(
            Check::at_least("Poincare inequality on samples", "spectral", q.poincare_min_ratio, rep.c_p * (1.0 - 1e-8))
                .with("min sampled ratio against c_P"),
        );
    }
    v
}

/// normalize, symmetries, discretization, conserved mode, run, fit, reports.
pub fn cmd_evolve(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new(Command::Evolve);
    let s = Setup::new(cfg)?;
    describe(&mut o, cfg, &s);
    let datum: InitialDatum = cfg.initial_datum()?;
    let h0 = datum.build(&s.disc, &s.sym, cfg.seed)?;
    let mode = conserved_mode(&s.disc, &h0, Some(&s.sym))?;
    let bgk = BgkOperator::new(&s.disc, cfg.collision.rate)?;
    let ev = Evolver::new(&s.disc, bgk, cfg.integrator.to_config())?;
    o.put("spectral_radius", format!("{:.6e}", ev.spectral_radius));
    let dg = &cfg.diagnostics;
    let omega = if dg.lyapunov || dg.constants {
        Some(WittenOperator::new(&s.disc.grid, dg.spectrum_request()?)?)
    } else {
        None
    };
    let mut tracker = match (&omega, dg.lyapunov) {
        (Some(om), true) => Some(LyapunovTracker::new(&s.disc, om, bgk, mode.clone(), LyapunovWeights::from_eps(dg.epsilon))),
        _ => None,
    };
    let traj = ev.run(&h0, &mode, &s.sym, tracker.as_mut().map(|t| t as &mut dyn Observer))?;

    let csv = out.join("trajectory.csv");
    traj.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
    o.artifacts.push(csv);
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let p = out.join(format!("snapshot_{k:03}"));
        write_snapshot(&s.disc, snap, &p)?;
        o.artifacts.push(p.with_extension("bin"));
    }
    let p = out.join("config.toml");
    std::fs::write(&p, cfg.to_toml())?;
    o.artifacts.push(p);

    let norm0 = s.disc.norm(&h0);
    o.checks.extend(drift_checks(&traj, norm0, dg.drift_tol));
    if dg.htheorem {
        let hr = htheorem_check(&traj, dg.htheorem_budget);
        o.checks.push(Check::at_most("discrete H-theorem", "diagnostics", hr.max_violation, hr.budget));
    }
    let dist = traj.column(|r| r.dist_mode);
    let ratio = dist.last().copied().unwrap_or(0.0) / dist[0].max(f64::MIN_POSITIVE);
    o.put("dist_mode_initial", format!("{:.9e}", dist[0]));
    o.put("dist_mode_final", format!("{:.9e}", dist.last().copied().unwrap_or(0.0)));
    let fit = match fit_decay(&traj, dg.fit_window.map(|w| (w[0], w[1]))) {
        Ok(f) => Some(f),
        Err(e) => {
            o.put("fit_error", e.to_string());
            None
        }
    };
    if let Some(f) = &fit {
        o.put("kappa", format!("{:.9e}", f.kappa));
        o.put("fit_r2", format!("{:.9}", f.r2));
        o.put("fit_status", format!("{:?}", f.status));
    }
    if let Some(target) = dg.decay_ratio {
        o.checks.push(Check::at_most("dist_mode decays by the target ratio", "evolve", ratio, target));
        let (kappa, r2) = fit.as_ref().map(|f| (f.kappa, f.r2)).unwrap_or((f64::NAN, f64::NAN));
        o.checks.push(Check::flag("fitted decay rate positive", "spectral", kappa > 0.0, format!("kappa = {kappa:.6e}")));
        o.checks.push(Check::at_least("decay fit R^2", "spectral", r2, 0.99));
    }
    if let Some(t) = &tracker {
        let t_min = dg.settle / cfg.collision.rate;
        let ls = summarize(&t.records, t_min);
        o.put("lyapunov_ratio_min", format!("{:.6}", ls.min_ratio));
        o.put("lyapunov_ratio_max", format!("{:.6}", ls.max_ratio));
        o.put("lyapunov_max_increase", format!("{:.3e}", ls.max_increase));
        o.checks.push(Check::at_least("F2 / |h|^2 above the band", "diagnostics", ls.min_ratio, dg.band[0]));
        o.checks.push(Check::at_most("F2 / |h|^2 below the band", "diagnostics", ls.max_ratio, dg.band[1]));
        if traj.times().last().is_some_and(|&t| t > t_min) {
            o.checks.push(Check::at_most("F2 non-increasing after settling", "diagnostics", ls.max_increase, dg.monotone_slack));
        }
    }
    o.summary.extend(mode_lines(&mode));
    if let Some(om) = &omega {
        if dg.constants {
            let rep = spectral_report(cfg, &s, om, fit.clone())?;
            o.checks.extend(spectral_checks(&rep));
            let p = out.join("report.txt");
            std::fs::write(&p, rep.to_key_value())?;
            o.artifacts.push(p);
            o.report = Some(rep);
        }
    }
    o.fit = fit;
    Ok(o)
}

/// Generators, their Gram matrix and the conserved mode of the configured datum.
pub fn cmd_modes(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new(Command::Modes);
    let s = Setup::new(cfg)?;
    describe(&mut o, cfg, &s);
    let gens = generators(&s.disc, &s.sym)?;
    let gram = orthonormality_gram(&s.disc, &gens)?;
    let k = gram.nrows();
    let gram_err = (&gram - DMatrix::<f64>::identity(k, k)).amax();
    o.checks.push(Check::at_most("generators orthonormal", "modes", gram_err, GRAM_TOL));
    for (name, m) in gens.names.iter().zip(&gens.modes) {
        let r = residual_mode_system(&s.disc, m, 0.0)?;
        o.checks.push(Check::at_most(format!("mode equations hold for {name}"), "modes", r.max(), MODE_RESIDUAL_TOL));
    }
    let h0 = cfg.initial_datum()?.build(&s.disc, &s.sym, cfg.seed)?;
    let mode = conserved_mode(&s.disc, &h0, Some(&s.sym))?;
    let mut text = String::new();
    let _ = writeln!(text, "generators = {}", gens.names.join(" "));
    for i in 0..k {
        let row: Vec<String> = (0..k).map(|j| format!("{:.12e}", gram[(i, j)])).collect();
        let _ = writeln!(text, "gram_{} = {}", i + 1, row.join(" "));
    }
    let _ = writeln!(text, "gram_max_error = {gram_err:.3e}");
    let _ = writeln!(text, "datum = {}", cfg.initial.datum);
    for (key, v) in mode_lines(&mode) {
        let _ = writeln!(text, "{key} = {v}");
    }
    if s.sym.harmonic_indices.is_empty() && s.sym.rotation_basis.is_empty() {
        let extra = mode.rotation.amax()
            + mode.gamma.iter().chain(&mode.gamma_bar).fold(0.0f64, |a, b| a.max(b.abs()))
            + mode.delta.abs()
            + mode.delta_bar.abs();
        o.checks.push(Check::at_most("only Maxwellian and energy modes", "modes", extra, 0.0));
    }
    let p = out.join("modes.txt");
    std::fs::write(&p, text)?;
    o.artifacts.push(p);
    o.summary.extend(mode_lines(&mode));
    o.put("generators", gens.names.join(" "));
    o.put("gram_max_error", format!("{gram_err:.3e}"));
    Ok(o)
}

/// Poincare, rigidity and collision constants with the sampled inequalities.
pub fn cmd_constants(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new(Command::Constants);
    let s = Setup::new(cfg)?;
    describe(&mut o, cfg, &s);
    let omega = WittenOperator::new(&s.disc.grid, cfg.diagnostics.spectrum_request()?)?;
    let rep = spectral_report(cfg, &s, &omega, None)?;
    o.checks.extend(spectral_checks(&rep));
    o.put("c_p", format!("{:.12e}", rep.c_p));
    o.put("c_k", rep.c_k.map(|c| format!("{c:.12e}")).unwrap_or_else(|| "undefined".into()));
    o.put("c_collision", format!("{:.12e}", rep.c_collision));
    let p = out.join("report.txt");
    std::fs::write(&p, rep.to_key_value())?;
    o.artifacts.push(p);
    o.report = Some(rep);
    Ok(o)
}

/// Observed order of the weighted adjoint of the derivative under grid halving.
pub fn adjoint_order(pot: &Potential, n: usize, half_widths: &[f64]) -> (f64, f64, f64) {
    let mut worst = (0.0, 0.0, f64::INFINITY);
    for axis in 0..pot.dim {
        let a = SpatialGrid::new(pot, n, half_widths).adjoint_consistency(axis);
        let b = SpatialGrid::new(pot, 2 * n - 1, half_widths).adjoint_consistency(axis);
        let p = (a / b).log2();
        if p < worst.2 {
            worst = (a, b, p);
        }
    }
    worst
}

/// Property suite on the configured potential and resolution.
pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::new(Command::Verify);
    let s = Setup::new(cfg)?;
    describe(&mut o, cfg, &s);
    let disc = &s.disc;
    let bgk = BgkOperator::new(disc, cfg.collision.rate)?;

    // Mode generators: orthonormality and the mode equations.
    let gens = generators(disc, &s.sym)?;
    let gram = orthonormality_gram(disc, &gens)?;
    let k = gram.nrows();
    o.checks.push(Check::at_most("generators orthonormal", "modes", (&gram - DMatrix::<f64>::identity(k, k)).amax(), GRAM_TOL));
    for (name, m) in gens.names.iter().zip(&gens.modes) {
        let r = residual_mode_system(disc, m, 0.0)?;
        o.checks.push(Check::at_most(format!("mode equations hold for {name}"), "modes", r.max(), MODE_RESIDUAL_TOL));
    }
    if !s.sym.has_pulsating() {
        let rejected = matches!(
            InitialDatum::Mode("pulsating+".into()).build(disc, &s.sym, 0),
            Err(Error::ClassificationError(_))
        );
        o.checks.push(Check::flag("pulsating datum rejected without pulsating modes", "modes", rejected, ""));
    }

    // Projections and transport.
    let h = random_perturbation(disc, cfg.seed);
    let (_, perp) = micro_projection(disc, &h);
    let (_, perp2) = micro_projection(disc, &perp);
    let nh = disc.norm(&h);
    o.checks.push(Check::at_most("micro projection idempotent", "collision", disc.norm(&perp2.sub(&perp)?) / nh, 1e-12));
    let rec0 = {
        let ev = Evolver::new(disc, bgk, IntegratorConfig { dt: cfg.integrator.dt, t_end: 0.0, ..Default::default() })?;
        let mode = conserved_mode(disc, &h, Some(&s.sym))?;
        ev.run(&h, &mode, &s.sym, None)?.records.remove(0)
    };
    o.checks.push(Check::at_most("Pythagoras identity", "collision", pythagoras_defect(&rec0) / (nh * nh), 1e-12));
    let g = random_perturbation(disc, cfg.seed.wrapping_add(1));
    let th = transport_apply(disc, &h)?;
    let tg = transport_apply(disc, &g)?;
    let skew = (disc.inner(&th, &g)? + disc.inner(&h, &tg)?).abs() / (disc.norm(&th) * disc.norm(&g)).max(f64::MIN_POSITIVE);
    o.checks.push(Check::at_most("transport skew in the discrete product", "evolve", skew, 1e-12));
    let n_probe = if disc.dim() == 1 { 64 } else { 24 };
    let (_, _, order) = adjoint_order(&s.pot, n_probe, &disc.grid.half_widths);
    o.checks.push(Check::at_least("weighted adjoint order under grid halving", "basis", order, ADJOINT_ORDER_MIN));

    // Each generator is carried along its own special mode.
    let short = IntegratorConfig { dt: cfg.integrator.dt, t_end: 1.0, output_stride: usize::MAX, ..cfg.integrator.to_config() };
    for (name, st) in gens.names.iter().zip(&gens.states) {
        let mode = conserved_mode(disc, st, Some(&s.sym))?;
        let ev = Evolver::new(disc, bgk, short.clone())?;
        let traj = ev.run(st, &mode, &s.sym, None)?;
        let dist = traj.records.last().map(|r| r.dist_mode).unwrap_or(f64::NAN);
        o.checks.push(Check::at_most(format!("{name} stays on its mode"), "modes", dist / disc.norm(st), MODE_DIST_TOL));
    }

    // Random datum: conservation, H-theorem, Lyapunov band.
    let dg = &cfg.diagnostics;
    let t_settle = dg.settle / cfg.collision.rate;
    let t_end = cfg.integrator.t_end.min(t_settle + 7.0);
    let run_cfg = IntegratorConfig { t_end, ..cfg.integrator.to_config() };
    let mode = conserved_mode(disc, &h, Some(&s.sym))?;
    let omega = WittenOperator::new(&disc.grid, dg.spectrum_request()?)?;
    let mut tracker = (disc.dim() == 1).then(|| LyapunovTracker::new(disc, &omega, bgk, mode.clone(), LyapunovWeights::from_eps(dg.epsilon)));
    let ev = Evolver::new(disc, bgk, run_cfg)?;
    let traj = ev.run(&h, &mode, &s.sym, tracker.as_mut().map(|t| t as &mut dyn Observer))?;
    o.checks.extend(drift_checks(&traj, nh, dg.drift_tol));
    let hr = htheorem_check(&traj, dg.htheorem_budget);
    o.checks.push(Check::at_most("discrete H-theorem", "diagnostics", hr.max_violation, hr.budget));
    if let Some(t) = &tracker {
        let ls = summarize(&t.records, t_settle);
        o.checks.push(Check::at_least("F2 / |h|^2 above the band", "diagnostics", ls.min_ratio, dg.band[0]));
        o.checks.push(Check::at_most("F2 / |h|^2 below the band", "diagnostics", ls.max_ratio, dg.band[1]));
        if t_end > t_settle {
            o.checks.push(Check::at_most("F2 non-increasing after settling", "diagnostics", ls.max_increase, dg.monotone_slack));
        }
    }

    // Constants.
    let rep = spectral_report(cfg, &s, &omega, None)?;
    o.checks.extend(spectral_checks(&rep));
    o.put("c_p", format!("{:.12e}", rep.c_p));
    let p = out.join("report.txt");
    std::fs::write(&p, rep.to_key_value())?;
    o.artifacts.push(p);
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_flag() {
        // Only this test touches the variable.
        std::env::set_var(THREADS_ENV, "3");
        assert_eq!(resolve_threads(Some(7)), 3);
        std::env::set_var(THREADS_ENV, "zero");
        assert_eq!(resolve_threads(Some(7)), 7);
        std::env::remove_var(THREADS_ENV);
        assert!(resolve_threads(None) >= 1);
    }

    #[test]
    fn failure_json_names_module() {
        let mut o = Outcome::new(Command::Evolve);
        o.checks.push(Check::at_most("conservation drift of mass", "evolve", 1.0, 0.5));
        o.checks.push(Check::at_most("fine", "spectral", 0.0, 0.5));
        let j = o.failures_json();
        assert_eq!(j["failures"].as_array().unwrap().len(), 1);
        assert_eq!(j["failures"][0]["module"], "evolve");
        assert!(!o.passed());
    }
}
