//! Micro-macro deviation fields, Lyapunov and dissipation functionals, and
//! the discrete H-theorem check along trajectories.

use nalgebra::DMatrix;

use crate::basis::{Discretization, KineticState, MacroFields};
use crate::collision::BgkOperator;
use crate::error::{Error, Result};
use crate::evolve::{transport_add, Observer, Record, Trajectory};
use crate::modes::{evaluate_mode, SpecialMode};
use crate::witten::WittenOperator;

/// Weights `eps_1..eps_6` of the Lyapunov functionals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovWeights {
    pub eps: f64,
    pub e: [f64; 6],
}

impl LyapunovWeights {
    pub fn from_eps(eps: f64) -> Self {
        let p = [1.0, 1.5, 1.75, 1.875, 61.0 / 32.0, 62.0 / 32.0];
        LyapunovWeights { eps, e: p.map(|q| eps.powf(q)) }
    }
}

impl Default for LyapunovWeights {
    fn default() -> Self {
        Self::from_eps(1e-2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationFields {
    pub t: f64,
    pub r_s: Vec<f64>,
    pub m_s: Vec<Vec<f64>>,
    pub e_s: Vec<f64>,
    pub w: Vec<f64>,
    pub w_s: Vec<f64>,
    pub dt_w_s: Vec<f64>,
    pub z: Vec<f64>,
    /// `<skew grad m>`
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Fields of the grid that every evaluation reuses.
#[derive(Clone, Debug)]
pub struct Geometry {
    x: Vec<Vec<f64>>,
    xi2: Vec<f64>,
    xi_phi: Vec<f64>,
    phi_s: Vec<f64>,
    /// `<phi x>`, `<|x|^2 x>`, `<x x^T>`
    phi_x: Vec<f64>,
    x2_x: Vec<f64>,
    xx: DMatrix<f64>,
    /// `(2 xi_phi + grad phi . x - d) / sqrt(2d)`
    x_c: Vec<f64>,
}

impl Geometry {
    pub fn new(disc: &Discretization) -> Self {
        let d = disc.dim();
        let g = &disc.grid;
        let n = disc.n_nodes();
        let x: Vec<Vec<f64>> = (0..d).map(|j| disc.coordinate(j)).collect();
        let xi_phi = disc.xi_phi();
        let r2: Vec<f64> = (0..n).map(|i| x.iter().map(|c| c[i] * c[i]).sum()).collect();
        let phi_x = (0..d).map(|j| g.inner(&g.phi, &x[j])).collect();
        let x2_x = (0..d).map(|j| g.inner(&r2, &x[j])).collect();
        let xx = DMatrix::from_fn(d, d, |i, j| g.inner(&x[i], &x[j]));
        let df = d as f64;
        let x_c = (0..n)
            .map(|i| {
                let gx: f64 = (0..d).map(|j| g.grad_phi[j][i] * x[j][i]).sum();
                (2.0 * xi_phi[i] + gx - df) / (2.0 * df).sqrt()
            })
            .collect();
        Geometry { xi2: disc.xi2(), phi_s: disc.phi_s(), x, xi_phi, phi_x, x2_x, xx, x_c }
    }
}

/// Time derivatives feeding the deviation fields.
struct Rates {
    dr: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
    c1: f64,
    c2: f64,
    c3: f64,
}

fn r_shape(disc: &Discretization, geo: &Geometry, r: &[f64]) -> Vec<f64> {
    let g = &disc.grid;
    let d = disc.dim();
    let grads: Vec<f64> = (0..d).map(|j| g.average(&g.deriv(j, r))).collect();
    let lap = g.average(&g.laplacian(r)) / (2.0 * d as f64);
    (0..r.len())
        .map(|i| r[i] - (0..d).map(|j| grads[j] * geo.x[j][i]).sum::<f64>() - lap * geo.xi2[i])
        .collect()
}

fn assemble(disc: &Discretization, geo: &Geometry, t: f64, f: &MacroFields, rates: Rates) -> DeviationFields {
    let g = &disc.grid;
    let d = disc.dim();
    let df = d as f64;
    let n = disc.n_nodes();
    // gm[(i, j)] = <d_j m_i>
    let gm = DMatrix::from_fn(d, d, |i, j| g.average(&g.deriv(j, &f.m[i])));
    let a = (&gm - gm.transpose()) * 0.5;
    let div = gm.trace() / df;
    let b: Vec<f64> = f.m.iter().map(|m| g.average(m)).collect();
    let c = g.average(&f.e);
    let m_s: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..n)
                .map(|p| {
                    let ax: f64 = (0..d).map(|j| a[(i, j)] * geo.x[j][p]).sum();
                    f.m[i][p] - ax - div * geo.x[i][p] - b[i]
                })
                .collect()
        })
        .collect();
    let k = (2.0 / df).sqrt();
    let r_s = r_shape(disc, geo, &f.r);
    let w: Vec<f64> = (0..n).map(|p| f.r[p] - k * c * g.phi[p]).collect();
    let w_s: Vec<f64> = (0..n).map(|p| r_s[p] - k * c * geo.phi_s[p]).collect();
    let dr_s = r_shape(disc, geo, &rates.dr);
    let dt_w_s: Vec<f64> = (0..n).map(|p| dr_s[p] - k * rates.c1 * geo.phi_s[p]).collect();
    let r_mean = g.average(&f.r);
    let q = 2.0 * (2.0 * df).sqrt();
    let z: Vec<f64> = (0..n)
        .map(|p| {
            let bx: f64 = (0..d).map(|j| rates.b1[j] * geo.x[j][p]).sum();
            f.r[p] - r_mean + bx - rates.c2 * geo.xi2[p] / q - c * k * geo.xi_phi[p]
        })
        .collect();
    DeviationFields {
        t,
        r_s,
        m_s,
        e_s: f.e.iter().map(|e| e - c).collect(),
        w,
        w_s,
        dt_w_s,
        z,
        a,
        b,
        c,
        b1: rates.b1,
        b2: rates.b2,
        c1: rates.c1,
        c2: rates.c2,
        c3: rates.c3,
    }
}

/// Deviation fields at the middle of the last five states, with centered
/// finite differences in time. States must be equally spaced.
pub fn deviations(disc: &Discretization, history: &[KineticState]) -> Result<DeviationFields> {
    if history.len() < 5 {
        return Err(Error::InsufficientHistory(format!("{} states, need 5", history.len())));
    }
    let w = &history[history.len() - 5..];
    let dt = w[1].t - w[0].t;
    if !(dt > 0.0) || w.windows(2).any(|p| ((p[1].t - p[0].t) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(Error::InsufficientHistory("states are not equally spaced in time".into()));
    }
    let geo = Geometry::new(disc);
    let f: Vec<MacroFields> = w.iter().map(|h| disc.macro_fields(h)).collect();
    let d1 = [1.0, -8.0, 0.0, 8.0, -1.0].map(|c| c / (12.0 * dt));
    let d2 = [-1.0, 16.0, -30.0, 16.0, -1.0].map(|c| c / (12.0 * dt * dt));
    let d3 = [-1.0, 2.0, 0.0, -2.0, 1.0].map(|c| c / (2.0 * dt * dt * dt));
    let sc = |st: &[f64; 5], q: &dyn Fn(&MacroFields) -> f64| -> f64 { (0..5).map(|k| st[k] * q(&f[k])).sum() };
    let d = disc.dim();
    let n = disc.n_nodes();
    let dr = (0..n).map(|p| (0..5).map(|k| d1[k] * f[k].r[p]).sum()).collect();
    let avg_m = |j: usize| move |mf: &MacroFields| disc.avg(&mf.m[j]);
    let avg_e = |mf: &MacroFields| disc.avg(&mf.e);
    let rates = Rates {
        dr,
        b1: (0..d).map(|j| sc(&d1, &avg_m(j))).collect(),
        b2: (0..d).map(|j| sc(&d2, &avg_m(j))).collect(),
        c1: sc(&d1, &avg_e),
        c2: sc(&d2, &avg_e),
        c3: sc(&d3, &avg_e),
    };
    Ok(assemble(disc, &geo, w[2].t, &f[2], rates))
}

/// `T h + C h`
pub fn generator_apply(disc: &Discretization, bgk: &BgkOperator, h: &KineticState) -> KineticState {
    let mut out = disc.zeros();
    transport_add(disc, h, &mut out, 1.0);
    bgk.apply_add(h, &mut out, 1.0);
    out.t = h.t;
    out
}

/// Deviation fields of `h` with time derivatives taken from powers of the generator.
pub fn deviations_exact(disc: &Discretization, geo: &Geometry, bgk: &BgkOperator, h: &KineticState) -> DeviationFields {
    let l1 = generator_apply(disc, bgk, h);
    let l2 = generator_apply(disc, bgk, &l1);
    let l3 = generator_apply(disc, bgk, &l2);
    let d = disc.dim();
    let es = disc.vel.energy_slot();
    let rates = Rates {
        dr: l1.slot(0).to_vec(),
        b1: (0..d).map(|j| disc.avg(l1.slot(1 + j))).collect(),
        b2: (0..d).map(|j| disc.avg(l2.slot(1 + j))).collect(),
        c1: disc.avg(l1.slot(es)),
        c2: disc.avg(l2.slot(es)),
        c3: disc.avg(l3.slot(es)),
    };
    assemble(disc, geo, h.t, &disc.macro_fields(h), rates)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovRecord {
    pub t: f64,
    pub f1: f64,
    pub f2: f64,
    pub d1: f64,
    pub d2: f64,
    pub norm2: f64,
    pub weights: LyapunovWeights,
}

impl LyapunovRecord {
    /// `F2 / ||h||^2`, `NaN` for `h = 0`.
    pub fn ratio(&self) -> f64 {
        if self.norm2 > 0.0 {
            self.f2 / self.norm2
        } else {
            f64::NAN
        }
    }
}

/// `F1, F2, D1, D2` of `h` with deviation fields `dev`.
pub fn lyapunov(
    disc: &Discretization,
    geo: &Geometry,
    h: &KineticState,
    dev: &DeviationFields,
    omega: &WittenOperator,
    weights: LyapunovWeights,
) -> Result<LyapunovRecord> {
    if omega.n_nodes != disc.n_nodes() {
        return Err(Error::ShapeMismatch("Witten operator built on another grid".into()));
    }
    let g = &disc.grid;
    let d = disc.dim();
    let df = d as f64;
    let n = disc.n_nodes();
    let e = &weights.e;
    let f = disc.macro_fields(h);
    let norm2 = disc.norm(h).powi(2);
    let perp2 = disc.norm_perp(h).powi(2);

    let theta = disc.moment_theta(h);
    let mut t1 = 0.0;
    for i in 0..d {
        t1 += g.inner(&omega.solve(&g.deriv(i, &f.e)), &theta[i]);
    }
    let em = disc.moment_e(h);
    let k = (2.0 / df).sqrt();
    let mut t2 = 0.0;
    let dm: Vec<Vec<f64>> = (0..d * d).map(|q| g.deriv(q % d, &dev.m_s[q / d])).collect();
    for i in 0..d {
        for j in 0..d {
            let sym: Vec<f64> = dm[i * d + j].iter().zip(&dm[j * d + i]).map(|(a, b)| 0.5 * (a + b)).collect();
            let shift = if i == j { k * dev.c } else { 0.0 };
            let rhs: Vec<f64> = em[i * d + j].iter().map(|v| v - shift).collect();
            t2 += g.inner(&omega.solve(&sym), &rhs);
        }
    }
    let mut t3 = 0.0;
    for i in 0..d {
        t3 += g.inner(&omega.solve(&g.deriv(i, &dev.w_s)), &dev.m_s[i]);
    }
    let t4 = -g.inner(&omega.solve(&dev.dt_w_s), &dev.w_s);
    let f1 = norm2 + e[0] * t1 + e[1] * t2 + e[2] * t3 + e[3] * t4;

    let m_s2: f64 = dev.m_s.iter().map(|m| g.norm2(m)).sum();
    let d1 = perp2 + g.norm2(&dev.e_s) + m_s2 + g.norm2(&dev.w_s) + g.norm2(&omega.inv_sqrt(&dev.dt_w_s));

    let q = 2.0 * (2.0 * df).sqrt();
    let y: Vec<f64> = (0..d)
        .map(|i| {
            let xxb: f64 = (0..d).map(|j| geo.xx[(i, j)] * dev.b1[j]).sum();
            k * geo.phi_x[i] * dev.c + geo.x2_x[i] * dev.c2 / q - xxb
        })
        .collect();
    let mut cross = 0.0;
    let mut ax2 = 0.0;
    for p in 0..n {
        let bx: f64 = (0..d).map(|j| geo.x[j][p] * dev.b1[j]).sum();
        let x_val = geo.x_c[p] * dev.c + geo.xi2[p] * dev.c2 / q - bx;
        let yg: f64 = (0..d).map(|j| y[j] * g.grad_phi[j][p]).sum();
        let mut gax = 0.0;
        for i in 0..d {
            let axi: f64 = (0..d).map(|j| dev.a[(i, j)] * geo.x[j][p]).sum();
            gax += g.grad_phi[i][p] * axi;
            ax2 += g.w[p] * axi * axi;
        }
        cross += g.w[p] * (x_val - yg) * gax;
    }
    let bb1: f64 = dev.b.iter().zip(&dev.b1).map(|(a, b)| a * b).sum();
    let f2 = f1 - e[4] * cross - e[5] * bb1 - e[5] * dev.c1 * dev.c2;
    let b1sq: f64 = dev.b1.iter().map(|v| v * v).sum();
    let d2 = d1 + ax2 + b1sq + dev.c2 * dev.c2;
    Ok(LyapunovRecord { t: h.t, f1, f2, d1, d2, norm2, weights })
}

/// Observer adding `F1, F2, D1, D2` of `h - h^par(t)` and `z_norm` of `h`.
pub struct LyapunovTracker<'a> {
    pub geo: Geometry,
    pub omega: &'a WittenOperator,
    pub bgk: BgkOperator,
    pub mode: SpecialMode,
    pub weights: LyapunovWeights,
    pub records: Vec<LyapunovRecord>,
}

impl<'a> LyapunovTracker<'a> {
    pub fn new(disc: &Discretization, omega: &'a WittenOperator, bgk: BgkOperator, mode: SpecialMode, weights: LyapunovWeights) -> Self {
        LyapunovTracker { geo: Geometry::new(disc), omega, bgk, mode, weights, records: Vec::new() }
    }
}

impl Observer for LyapunovTracker<'_> {
    fn observe(&mut self, disc: &Discretization, h: &KineticState, record: &mut Record) -> Result<()> {
        let par = evaluate_mode(disc, &self.mode, h.t);
        let mut rem = h.sub(&par)?;
        rem.t = h.t;
        let dev = deviations_exact(disc, &self.geo, &self.bgk, &rem);
        let lr = lyapunov(disc, &self.geo, &rem, &dev, self.omega, self.weights)?;
        let full = deviations_exact(disc, &self.geo, &self.bgk, h);
        record.extra.push(("F1".into(), lr.f1));
        record.extra.push(("F2".into(), lr.f2));
        record.extra.push(("D1".into(), lr.d1));
        record.extra.push(("D2".into(), lr.d2));
        record.extra.push(("z_norm".into(), disc.field_norm(&full.z)));
        self.records.push(lr);
        Ok(())
    }
}

/// Band of `F2 / ||h||^2` and the worst relative increase of `F2` after `t_min`.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSummary {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub max_increase: f64,
}

pub fn summarize(records: &[LyapunovRecord], t_min: f64) -> LyapunovSummary {
    let mut s = LyapunovSummary { min_ratio: f64::INFINITY, max_ratio: f64::NEG_INFINITY, max_increase: f64::NEG_INFINITY };
    for r in records {
        let q = r.ratio();
        if q.is_finite() {
            s.min_ratio = s.min_ratio.min(q);
            s.max_ratio = s.max_ratio.max(q);
        }
    }
    for p in records.windows(2) {
        if p[0].t >= t_min && p[0].f2 > 0.0 {
            s.max_increase = s.max_increase.max(p[1].f2 / p[0].f2 - 1.0);
        }
    }
    s
}

/// Discrete check of `d/dt ||h||^2 <= -2 rate ||h_perp||^2` between outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct HTheoremReport {
    /// Largest `(||h_{k+1}||^2 - ||h_k||^2) + (D_{k+1} - D_k)`, relative to `||h_0||^2`.
    pub max_violation: f64,
    pub budget: f64,
    pub holds: bool,
}

/// Relative per-output slack for the split scheme, whose collision losses
/// are accounted exactly. The unsplit scheme integrates the dissipation by
/// the trapezoid rule and needs a budget of order `dt^2`.
pub const HTHEOREM_BUDGET: f64 = 1e-12;

/// Compares the energy loss between consecutive records with the recorded dissipation.
pub fn htheorem_check(traj: &Trajectory, budget: f64) -> HTheoremReport {
    let scale = traj.records.first().map(|r| r.norm_h * r.norm_h).unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut worst = f64::NEG_INFINITY;
    for p in traj.records.windows(2) {
        let de = p[1].norm_h.powi(2) - p[0].norm_h.powi(2);
        let dd = p[1].dissipation - p[0].dissipation;
        worst = worst.max((de + dd) / scale);
    }
    if traj.records.len() < 2 {
        worst = 0.0;
    }
    HTheoremReport { max_violation: worst, budget, holds: worst <= budget }
}

/// `| ||h||^2 - (||r||^2 + ||m||^2 + ||e||^2 + ||h_perp||^2) |` of a record.
pub fn pythagoras_defect(r: &Record) -> f64 {
    (r.norm_h.powi(2) - (r.norm_r.powi(2) + r.norm_m.powi(2) + r.norm_e.powi(2) + r.norm_hperp.powi(2))).abs()
}
