//! Time integration of `d_t h = T h + C h`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::basis::{Discretization, KineticState};
use crate::collision::BgkOperator;
use crate::error::{Error, Result};
use crate::hermite::max_node;
use crate::modes::{evaluate_mode, SpecialMode};
use crate::potential::SymmetryStructure;

/// `out += coef * T h`.
///
/// Output slots are independent and computed in parallel; each slot is
/// accumulated in a fixed order, so results do not depend on the thread count.
pub fn transport_add(disc: &Discretization, h: &KineticState, out: &mut KineticState, coef: f64) {
    let d = disc.dim();
    let n = h.n_nodes;
    let vel = &disc.vel;
    let ops = &disc.grid.ops;
    let tensor = to_tensor(disc, h);
    let mut tout = vec![0.0; h.data.len()];
    tout.par_chunks_mut(n).enumerate().for_each(|(k, chunk)| {
        for j in 0..d {
            if let Some(lo) = vel.lower[k][j] {
                ops[j].apply_add(&tensor[lo.slot * n..(lo.slot + 1) * n], chunk, -lo.coef);
            }
            if let Some(up) = vel.upper[k][j] {
                ops[j].apply_adjoint_add(&tensor[up.slot * n..(up.slot + 1) * n], chunk, up.coef);
            }
        }
    });
    from_tensor_in_place(disc, &mut tout, n);
    for (o, t) in out.data.iter_mut().zip(&tout) {
        *o += coef * t;
    }
}

fn to_tensor(disc: &Discretization, h: &KineticState) -> Vec<f64> {
    let d = disc.dim();
    let n = h.n_nodes;
    let mut data = h.data.clone();
    if d > 1 {
        let mut rot = vec![0.0; d];
        let mut ten = vec![0.0; d];
        for a in 0..n {
            for b in 0..d {
                rot[b] = h.data[(d + 1 + b) * n + a];
            }
            disc.vel.rotated_to_tensor(&rot, &mut ten);
            for b in 0..d {
                data[(d + 1 + b) * n + a] = ten[b];
            }
        }
    }
    data
}

fn from_tensor_in_place(disc: &Discretization, data: &mut [f64], n: usize) {
    let d = disc.dim();
    if d == 1 {
        return;
    }
    let mut rot = vec![0.0; d];
    let mut ten = vec![0.0; d];
    for a in 0..n {
        for b in 0..d {
            ten[b] = data[(d + 1 + b) * n + a];
        }
        disc.vel.tensor_to_rotated(&ten, &mut rot);
        for b in 0..d {
            data[(d + 1 + b) * n + a] = rot[b];
        }
    }
}

/// `T h`
pub fn transport_apply(disc: &Discretization, h: &KineticState) -> Result<KineticState> {
    if h.n_nodes != disc.n_nodes() || h.n_modes != disc.n_modes() {
        return Err(Error::ShapeMismatch("state does not match the discretization".into()));
    }
    let mut out = disc.zeros();
    out.t = h.t;
    transport_add(disc, h, &mut out, 1.0);
    Ok(out)
}

/// Spectral radius of the transport operator by power iteration on `-T^2`.
pub fn transport_spectral_radius(disc: &Discretization) -> f64 {
    let mut h = disc.project(|x, v| 1.0 + x.iter().sum::<f64>() + v.iter().map(|a| a * a * a).sum::<f64>());
    for (i, v) in h.data.iter_mut().enumerate() {
        *v += ((i * 7919) % 101) as f64 / 101.0 - 0.5;
    }
    let mut lam = 0.0;
    for _ in 0..60 {
        let nh = disc.norm(&h);
        h.scale(1.0 / nh);
        let th = transport_apply(disc, &h).expect("shape");
        let tth = transport_apply(disc, &th).expect("shape");
        let l = disc.norm(&tth);
        h = tth;
        if (l - lam).abs() < 1e-4 * l {
            lam = l;
            break;
        }
        lam = l;
    }
    // One extra margin for the slow convergence of the power method.
    1.05 * lam.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Rk4Full,
    Strang,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded outputs.
    pub output_stride: usize,
    pub scheme: Scheme,
    pub safety: f64,
    /// Times at which full states are kept.
    pub snapshot_times: Vec<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            t_end: 10.0,
            output_stride: 100,
            scheme: Scheme::Strang,
            safety: 0.5,
            snapshot_times: Vec::new(),
        }
    }
}

/// Largest stable product `dt * rho(T)` accepted for RK4 on a skew operator.
pub const RK4_RADIUS_LIMIT: f64 = 2.5;

pub struct Evolver<'a> {
    pub disc: &'a Discretization,
    pub bgk: BgkOperator,
    pub config: IntegratorConfig,
    /// Disables transport, leaving the collision flow alone.
    pub transport_enabled: bool,
    pub spectral_radius: f64,
    pub v_max: f64,
}

impl<'a> Evolver<'a> {
    pub fn new(disc: &'a Discretization, bgk: BgkOperator, config: IntegratorConfig) -> Result<Self> {
        let v_max = max_node(disc.vel.order + 2);
        let rho = transport_spectral_radius(disc);
        let ev = Evolver { disc, bgk, config, transport_enabled: true, spectral_radius: rho, v_max };
        ev.check_cfl()?;
        Ok(ev)
    }

    /// Collision-only evolver, for checks of the relaxation flow.
    pub fn collision_only(disc: &'a Discretization, bgk: BgkOperator, config: IntegratorConfig) -> Result<Self> {
        let mut ev = Evolver { disc, bgk, config, transport_enabled: false, spectral_radius: 0.0, v_max: 0.0 };
        ev.v_max = max_node(disc.vel.order + 2);
        ev.check_cfl()?;
        Ok(ev)
    }

    fn check_cfl(&self) -> Result<()> {
        let c = &self.config;
        if !(c.dt > 0.0) || !(c.t_end >= 0.0) || c.output_stride == 0 {
            return Err(Error::Config("dt, t_end and output_stride must be positive".into()));
        }
        let mut limit = 1.0 / self.bgk.rate;
        if self.transport_enabled {
            limit = limit.min(self.disc.grid.dx / self.v_max);
        }
        if c.dt > c.safety * limit {
            return Err(Error::CflViolation(format!(
                "dt = {:e} exceeds safety * min(dx/v_max, 1/rate) = {:e}",
                c.dt,
                c.safety * limit
            )));
        }
        let rho = match c.scheme {
            Scheme::Strang => self.spectral_radius,
            Scheme::Rk4Full => self.spectral_radius + self.bgk.rate,
        };
        if self.transport_enabled && c.dt * rho > RK4_RADIUS_LIMIT {
            return Err(Error::CflViolation(format!(
                "dt * spectral radius = {:.3} exceeds {RK4_RADIUS_LIMIT}",
                c.dt * rho
            )));
        }
        Ok(())
    }

    fn rhs(&self, h: &KineticState, with_collision: bool) -> KineticState {
        let mut out = self.disc.zeros();
        if self.transport_enabled {
            transport_add(self.disc, h, &mut out, 1.0);
        }
        if with_collision {
            self.bgk.apply_add(h, &mut out, 1.0);
        }
        out
    }

    fn rk4(&self, h: &mut KineticState, dt: f64, with_collision: bool) {
        let k1 = self.rhs(h, with_collision);
        let mut y = h.clone();
        y.axpy(0.5 * dt, &k1).unwrap();
        let k2 = self.rhs(&y, with_collision);
        y.data.copy_from_slice(&h.data);
        y.axpy(0.5 * dt, &k2).unwrap();
        let k3 = self.rhs(&y, with_collision);
        y.data.copy_from_slice(&h.data);
        y.axpy(dt, &k3).unwrap();
        let k4 = self.rhs(&y, with_collision);
        for i in 0..h.data.len() {
            h.data[i] += dt / 6.0 * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]);
        }
    }

    /// Advances `h` by `dt`.
    pub fn step(&self, h: &mut KineticState, dt: f64) {
        self.step_with_loss(h, dt);
    }

    /// Advances `h` by `dt` and returns the decrease of `||h||^2` caused by
    /// the exact collision sub-steps, or `None` for the unsplit scheme.
    pub fn step_with_loss(&self, h: &mut KineticState, dt: f64) -> Option<f64> {
        let loss = match self.config.scheme {
            Scheme::Rk4Full => {
                self.rk4(h, dt, true);
                None
            }
            Scheme::Strang => {
                let f = 1.0 - (-self.bgk.rate * dt).exp();
                let mut loss = f * self.disc.norm_perp(h).powi(2);
                self.bgk.exact_step(h, 0.5 * dt);
                if self.transport_enabled {
                    self.rk4(h, dt, false);
                }
                loss += f * self.disc.norm_perp(h).powi(2);
                self.bgk.exact_step(h, 0.5 * dt);
                Some(loss)
            }
        };
        h.t += dt;
        loss
    }

    /// Runs from `h0`, comparing against the special mode `mode`.
    pub fn run(
        &self,
        h0: &KineticState,
        mode: &SpecialMode,
        sym: &SymmetryStructure,
        observer: Option<&mut dyn Observer>,
    ) -> Result<Trajectory> {
        let disc = self.disc;
        let probe = Probe::new(disc, sym);
        let cfg = &self.config;
        let n_steps = (cfg.t_end / cfg.dt).round() as usize;
        let mut h = h0.clone();
        let mut traj = Trajectory { records: Vec::new(), snapshots: Vec::new(), aborted: None };
        let mut observer = observer;
        let lam = self.bgk.rate;
        let mut dissipation = 0.0;
        let mut perp2 = disc.norm_perp(&h).powi(2);
        let mut last_norm = disc.norm(&h);
        let mut rec = probe.record(&h, mode, dissipation);
        if let Some(obs) = observer.as_deref_mut() {
            obs.observe(disc, &h, &mut rec)?;
        }
        traj.records.push(rec);
        let mut snaps: Vec<f64> = cfg.snapshot_times.clone();
        snaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut next_snap = 0;
        while next_snap < snaps.len() && snaps[next_snap] <= 0.5 * cfg.dt {
            traj.snapshots.push(h.clone());
            next_snap += 1;
        }
        for step in 1..=n_steps {
            let loss = self.step_with_loss(&mut h, cfg.dt);
            h.t = step as f64 * cfg.dt;
            let p2 = disc.norm_perp(&h).powi(2);
            dissipation += loss.unwrap_or(lam * cfg.dt * (perp2 + p2));
            perp2 = p2;
            while next_snap < snaps.len() && (snaps[next_snap] - h.t).abs() <= 0.5 * cfg.dt {
                traj.snapshots.push(h.clone());
                next_snap += 1;
            }
            if step % cfg.output_stride == 0 || step == n_steps {
                let norm = disc.norm(&h);
                if !h.is_finite() || norm > 1.01 * last_norm {
                    let reason = if h.is_finite() { "norm grew by more than 1%" } else { "non-finite entries" };
                    traj.aborted = Some(traj.records.last().map(|r| r.t).unwrap_or(0.0));
                    return Err(Error::NonFiniteState { t: traj.aborted.unwrap(), reason: reason.into() });
                }
                last_norm = norm;
                let mut rec = probe.record(&h, mode, dissipation);
                if let Some(obs) = observer.as_deref_mut() {
                    obs.observe(disc, &h, &mut rec)?;
                }
                traj.records.push(rec);
            }
        }
        Ok(traj)
    }
}

/// Hook called at every recorded output.
pub trait Observer {
    fn observe(&mut self, disc: &Discretization, h: &KineticState, record: &mut Record) -> Result<()>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Record {
    pub t: f64,
    pub norm_h: f64,
    pub norm_hperp: f64,
    pub norm_r: f64,
    pub norm_m: f64,
    pub norm_e: f64,
    pub dist_mode: f64,
    pub mass: f64,
    pub energy: f64,
    pub angmom: Vec<f64>,
    pub dir_x: Vec<f64>,
    pub dir_v: Vec<f64>,
    pub pul_xv: f64,
    pub pul_x2v2: f64,
    /// Global conservation defects of `h - h^par(t)`, by name.
    pub conservation: Vec<(String, f64)>,
    /// `int_0^t 2 rate ||h_perp||^2`: exact over the collision sub-steps of
    /// the split scheme, trapezoid rule over steps otherwise.
    pub dissipation: f64,
    /// Extra named columns (Lyapunov functionals, ...).
    pub extra: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub snapshots: Vec<KineticState>,
    /// Last valid time when the run stopped early.
    pub aborted: Option<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&Record) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    /// Largest `|q(t) - q(0)| / max(t, 1)` over all conservation defects.
    pub fn conservation_drift(&self) -> Vec<(String, f64)> {
        let Some(first) = self.records.first() else { return Vec::new() };
        first
            .conservation
            .iter()
            .enumerate()
            .map(|(k, (name, q0))| {
                let worst = self
                    .records
                    .iter()
                    .map(|r| (r.conservation[k].1 - q0).abs() / r.t.max(1.0))
                    .fold(0.0f64, f64::max);
                (name.clone(), worst)
            })
            .collect()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "norm_h", "norm_hperp", "norm_r", "norm_m", "norm_e", "dist_mode", "mass", "energy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if let Some(r) = self.records.first() {
            for j in 0..r.angmom.len() {
                h.push(format!("angmom_{}", j + 1));
            }
            for i in 0..r.dir_x.len() {
                h.push(format!("dir_x_{}", i + 1));
            }
            for i in 0..r.dir_v.len() {
                h.push(format!("dir_v_{}", i + 1));
            }
            h.push("pul_xv".into());
            h.push("pul_x2v2".into());
            for (name, _) in &r.extra {
                h.push(name.clone());
            }
        }
        h
    }

    /// Writes the trajectory as CSV with a header row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        wr.write_record(self.csv_header()).map_err(io)?;
        for r in &self.records {
            let mut row = vec![r.t, r.norm_h, r.norm_hperp, r.norm_r, r.norm_m, r.norm_e, r.dist_mode, r.mass, r.energy];
            row.extend(&r.angmom);
            row.extend(&r.dir_x);
            row.extend(&r.dir_v);
            row.push(r.pul_xv);
            row.push(r.pul_x2v2);
            row.extend(r.extra.iter().map(|(_, v)| *v));
            wr.write_record(row.iter().map(|v| format!("{v:.17e}"))).map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Evaluates the recorded quantities of a state.
struct Probe<'a> {
    disc: &'a Discretization,
    x: Vec<Vec<f64>>,
    r2: Vec<f64>,
    ham: KineticState,
    rotations: Vec<Vec<Vec<f64>>>,
    harmonic: Vec<usize>,
    pulsating: bool,
}

impl<'a> Probe<'a> {
    fn new(disc: &'a Discretization, sym: &SymmetryStructure) -> Self {
        let d = disc.dim();
        let n = disc.n_nodes();
        let x: Vec<Vec<f64>> = (0..d).map(|j| disc.coordinate(j)).collect();
        let r2 = (0..n).map(|i| (0..d).map(|j| x[j][i] * x[j][i]).sum()).collect();
        let rotations = sym
            .rotation_basis
            .iter()
            .map(|a| (0..d).map(|r| (0..n).map(|i| (0..d).map(|c| a[(r, c)] * x[c][i]).sum()).collect()).collect())
            .collect();
        Probe {
            disc,
            x,
            r2,
            ham: disc.hamiltonian(),
            rotations,
            harmonic: sym.harmonic_indices.clone(),
            pulsating: sym.has_pulsating(),
        }
    }

    fn record(&self, h: &KineticState, mode: &SpecialMode, dissipation: f64) -> Record {
        let disc = self.disc;
        let g = &disc.grid;
        let d = disc.dim();
        let df = d as f64;
        let f = disc.macro_fields(h);
        let mut rec = Record {
            t: h.t,
            norm_h: disc.norm(h),
            norm_hperp: disc.norm_perp(h),
            norm_r: disc.field_norm(&f.r),
            norm_m: f.m.iter().map(|m| g.norm2(m)).sum::<f64>().sqrt(),
            norm_e: disc.field_norm(&f.e),
            mass: disc.avg(&f.r),
            energy: disc.inner(h, &self.ham).unwrap_or(f64::NAN),
            dissipation,
            ..Record::default()
        };
        rec.angmom = self.rotations.iter().map(|ax| (0..d).map(|j| g.inner(&f.m[j], &ax[j])).sum()).collect();
        rec.dir_x = (0..d).map(|j| g.inner(&f.r, &self.x[j])).collect();
        rec.dir_v = (0..d).map(|j| disc.avg(&f.m[j])).collect();
        rec.pul_xv = (0..d).map(|j| g.inner(&f.m[j], &self.x[j])).sum();
        rec.pul_x2v2 = 0.5 * (g.inner(&f.r, &self.r2) - df * rec.mass) - (df / 2.0).sqrt() * disc.avg(&f.e);
        let par = evaluate_mode(disc, mode, h.t);
        let rem = h.sub(&par).expect("shape");
        rec.dist_mode = disc.norm(&rem);
        rec.conservation = self.conservation(&rem);
        rec
    }

    /// Global conservation laws of the remainder `h - h^par`.
    fn conservation(&self, rem: &KineticState) -> Vec<(String, f64)> {
        let disc = self.disc;
        let g = &disc.grid;
        let d = disc.dim();
        let df = d as f64;
        let f = disc.macro_fields(rem);
        let mut out = Vec::new();
        let r_mean = disc.avg(&f.r);
        let e_mean = disc.avg(&f.e);
        let phi_r = g.inner(&g.phi, &f.r);
        out.push(("mass".to_string(), r_mean));
        out.push(("energy".to_string(), (df / 2.0).sqrt() * e_mean + phi_r));
        for (j, ax) in self.rotations.iter().enumerate() {
            let v: f64 = (0..d).map(|k| g.inner(&f.m[k], &ax[k])).sum();
            out.push((format!("rotation_{}", j + 1), v));
        }
        for &i in &self.harmonic {
            out.push((format!("directional_rx_{}", i + 1), g.inner(&f.r, &self.x[i])));
            out.push((format!("directional_m_{}", i + 1), disc.avg(&f.m[i])));
        }
        if self.pulsating {
            let mx: f64 = (0..d).map(|j| g.inner(&f.m[j], &self.x[j])).sum();
            out.push(("pulsating_mx".to_string(), mx));
            out.push(("pulsating_energy".to_string(), (df / 2.0).sqrt() * e_mean - phi_r));
        }
        out
    }
}

/// Fits `a cos(w t) + b sin(w t) + c` to a series and returns `w`.
pub fn fit_frequency(t: &[f64], y: &[f64], w_lo: f64, w_hi: f64) -> f64 {
    let resid = |w: f64| -> f64 {
        let n = t.len();
        let mut a = nalgebra::DMatrix::zeros(n, 3);
        for i in 0..n {
            a[(i, 0)] = (w * t[i]).cos();
            a[(i, 1)] = (w * t[i]).sin();
            a[(i, 2)] = 1.0;
        }
        let b = nalgebra::DVector::from_column_slice(y);
        let svd = a.clone().svd(true, true);
        let x = svd.solve(&b, 1e-14).expect("least squares");
        (a * x - b).norm_squared()
    };
    // Coarse scan, then golden section.
    let m = 400;
    let mut best = (f64::INFINITY, w_lo);
    for k in 0..=m {
        let w = w_lo + (w_hi - w_lo) * k as f64 / m as f64;
        let r = resid(w);
        if r < best.0 {
            best = (r, w);
        }
    }
    let step = (w_hi - w_lo) / m as f64;
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if resid(c) < resid(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Writes a state as a raw little-endian `f64` file plus a text header.
pub fn write_snapshot(disc: &Discretization, h: &KineticState, path: &Path) -> Result<()> {
    let mut header = String::new();
    writeln!(header, "dtype = f64-le").unwrap();
    writeln!(header, "dims = {} {}", h.n_modes, h.n_nodes).unwrap();
    writeln!(header, "ordering = mode-major; node index = sum_j i_j * n^j, axis 0 fastest").unwrap();
    writeln!(header, "dim = {}", disc.dim()).unwrap();
    writeln!(header, "nodes_per_axis = {}", disc.grid.n).unwrap();
    let widths: Vec<String> = disc.grid.half_widths.iter().map(|l| format!("{l:.17e}")).collect();
    writeln!(header, "half_widths = {}", widths.join(" ")).unwrap();
    writeln!(header, "velocity_order = {}", disc.vel.order).unwrap();
    writeln!(header, "t = {:.17e}", h.t).unwrap();
    std::fs::write(path.with_extension("txt"), header)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.with_extension("bin"))?);
    for v in &h.data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<KineticState> {
    let header = std::fs::read_to_string(path.with_extension("txt"))?;
    let mut dims = None;
    let mut t = 0.0;
    for line in header.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "dims" => {
                    let p: Vec<usize> = v.split_whitespace().filter_map(|s| s.parse().ok()).collect();
                    if p.len() == 2 {
                        dims = Some((p[0], p[1]));
                    }
                }
                "t" => t = v.trim().parse().unwrap_or(0.0),
                _ => {}
            }
        }
    }
    let (modes, nodes) = dims.ok_or_else(|| Error::Config("snapshot header lacks dims".into()))?;
    let bytes = std::fs::read(path.with_extension("bin"))?;
    if bytes.len() != 8 * modes * nodes {
        return Err(Error::ShapeMismatch("snapshot size does not match its header".into()));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(KineticState { data, n_nodes: nodes, n_modes: modes, t })
}

/// Residuals of the five macroscopic equations between two consecutive states,
/// with time derivatives by the midpoint rule.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MacroResiduals {
    pub r: f64,
    pub m: f64,
    pub e: f64,
    pub matrix_e: f64,
    pub theta: f64,
}

pub fn macroscopic_residuals(disc: &Discretization, before: &KineticState, after: &KineticState, dt: f64, rate: f64) -> Result<MacroResiduals> {
    let d = disc.dim();
    let df = d as f64;
    let n = disc.n_nodes();
    let g = &disc.grid;
    let mut mid = before.clone();
    mid.axpy(1.0, after)?;
    mid.scale(0.5);
    let f = disc.macro_fields(&mid);
    let fb = disc.macro_fields(before);
    let fa = disc.macro_fields(after);
    let (_, perp) = crate::collision::micro_projection(disc, &mid);
    // L h_perp = T h_perp + C h_perp
    let mut lperp = transport_apply(disc, &perp)?;
    let bgk = BgkOperator { rate, micro_start: disc.vel.micro_start() };
    bgk.apply_add(&perp, &mut lperp, 1.0);
    let e_perp = disc.moment_e(&perp);
    let th_perp = disc.moment_theta(&perp);
    let e_l = disc.moment_e(&lperp);
    let th_l = disc.moment_theta(&lperp);
    let dt_of = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (x - y) / dt).collect() };
    let mut res = MacroResiduals::default();
    // r
    let mut div_star = vec![0.0; n];
    for j in 0..d {
        g.ops[j].apply_adjoint_add(&f.m[j], &mut div_star, 1.0);
    }
    let drt = dt_of(&fa.r, &fb.r);
    res.r = g.norm2(&(0..n).map(|i| drt[i] - div_star[i]).collect::<Vec<_>>()).sqrt();
    // m
    let mut acc = 0.0;
    for j in 0..d {
        let dmt = dt_of(&fa.m[j], &fb.m[j]);
        let mut rhs = vec![0.0; n];
        g.ops[j].apply_add(&f.r, &mut rhs, -1.0);
        g.ops[j].apply_adjoint_add(&f.e, &mut rhs, (2.0 / df).sqrt());
        for l in 0..d {
            g.ops[l].apply_adjoint_add(&e_perp[j * d + l], &mut rhs, 1.0);
        }
        acc += g.norm2(&(0..n).map(|i| dmt[i] - rhs[i]).collect::<Vec<_>>());
    }
    res.m = acc.sqrt();
    // e
    let det = dt_of(&fa.e, &fb.e);
    let mut rhs = vec![0.0; n];
    for j in 0..d {
        g.ops[j].apply_add(&f.m[j], &mut rhs, -(2.0 / df).sqrt());
        g.ops[j].apply_adjoint_add(&th_perp[j], &mut rhs, 1.0);
    }
    res.e = g.norm2(&(0..n).map(|i| det[i] - rhs[i]).collect::<Vec<_>>()).sqrt();
    // E[h]
    let eb = disc.moment_e(before);
    let ea = disc.moment_e(after);
    let dm: Vec<Vec<f64>> = (0..d * d).map(|k| g.deriv(k % d, &f.m[k / d])).collect();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let k = i * d + j;
            let v: Vec<f64> = (0..n)
                .map(|a| (ea[k][a] - eb[k][a]) / dt + (dm[i * d + j][a] + dm[j * d + i][a]) - e_l[k][a])
                .collect();
            acc += g.norm2(&v);
        }
    }
    res.matrix_e = acc.sqrt();
    // Theta[h]
    let tb = disc.moment_theta(before);
    let ta = disc.moment_theta(after);
    let mut acc = 0.0;
    for i in 0..d {
        let de = g.deriv(i, &f.e);
        let v: Vec<f64> = (0..n)
            .map(|a| (ta[i][a] - tb[i][a]) / dt + (1.0 + 2.0 / df) * de[a] - th_l[i][a])
            .collect();
        acc += g.norm2(&v);
    }
    res.theta = acc.sqrt();
    Ok(res)
}
