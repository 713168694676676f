//! Special macroscopic modes: coefficients from the global conservation
//! laws, evaluation in time, and consistency checks.
//!
//! Time laws follow the characteristics of `T = grad phi . grad_v - v . grad_x`.
//! With frequency `p` on a harmonic axis the directional generators are
//! `p x cos(pt) - v sin(pt)` and `v cos(pt) + p x sin(pt)`; the pulsating pair
//! rotates `P = p x.v` and `Q = (p^2 |x|^2 - |v|^2)/2` at frequency `2p`.

use nalgebra::{DMatrix, DVector};

use crate::basis::{Discretization, KineticState};
use crate::collision::BgkOperator;
use crate::error::{Error, Result};
use crate::evolve::transport_apply;
use crate::potential::{detect_harmonic_directions, SymmetryStructure, DEFAULT_RANK_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct SpecialMode {
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Skew matrix in the span of the detected rotations.
    pub rotation: DMatrix<f64>,
    /// Directional coefficients per axis; zero outside the harmonic axes.
    pub gamma: Vec<f64>,
    pub gamma_bar: Vec<f64>,
    pub delta: f64,
    pub delta_bar: f64,
    pub frequencies: Vec<f64>,
    pub harmonic: Vec<usize>,
}

impl SpecialMode {
    pub fn zero(dim: usize, frequencies: Vec<f64>, harmonic: Vec<usize>) -> Self {
        SpecialMode {
            dim,
            alpha: 0.0,
            beta: 0.0,
            rotation: DMatrix::zeros(dim, dim),
            gamma: vec![0.0; dim],
            gamma_bar: vec![0.0; dim],
            delta: 0.0,
            delta_bar: 0.0,
            frequencies,
            harmonic,
        }
    }

    /// Common pulsating frequency `p` (first axis).
    fn pul_freq(&self) -> f64 {
        self.frequencies.first().copied().unwrap_or(1.0)
    }

    /// Pulsating coefficients of `P/sqrt(d)` and `Q/sqrt(d)` at time `t`.
    pub fn pulsating_coefs(&self, t: f64) -> (f64, f64) {
        let w = 2.0 * self.pul_freq() * t;
        let (s, c) = w.sin_cos();
        (self.delta * c - self.delta_bar * s, self.delta * s + self.delta_bar * c)
    }

    /// `b(t) = <m>` on the harmonic axes.
    pub fn b(&self, t: f64) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let (s, c) = (self.frequencies[i] * t).sin_cos();
                self.gamma_bar[i] * c - self.gamma[i] * s
            })
            .collect()
    }

    /// `b''(t)`
    pub fn b2(&self, t: f64) -> Vec<f64> {
        self.b(t).iter().enumerate().map(|(i, v)| -self.frequencies[i].powi(2) * v).collect()
    }

    /// `c(t) = <e>` and its first three derivatives.
    pub fn c_derivs(&self, t: f64) -> [f64; 4] {
        let d = self.dim as f64;
        let p = self.pul_freq();
        let (cp, cq) = self.pulsating_coefs(t);
        // e = beta sqrt(d/2) - cq / sqrt(2); cq' = 2p cp, cp' = -2p cq
        let c0 = self.beta * (d / 2.0).sqrt() - cq / 2f64.sqrt();
        let c1 = -2.0 * p * cp / 2f64.sqrt();
        let c2 = 4.0 * p * p * cq / 2f64.sqrt();
        let c3 = 8.0 * p.powi(3) * cp / 2f64.sqrt();
        [c0, c1, c2, c3]
    }

    pub fn is_stationary(&self) -> bool {
        self.gamma.iter().chain(&self.gamma_bar).all(|v| *v == 0.0) && self.delta == 0.0 && self.delta_bar == 0.0
    }
}

fn symmetry_for(disc: &Discretization, sym: Option<&SymmetryStructure>) -> Result<SymmetryStructure> {
    match sym {
        Some(s) => Ok(s.clone()),
        None if disc.dim() == 1 => detect_harmonic_directions(&disc.pot, DEFAULT_RANK_TOL),
        None => Err(Error::SymmetryUnavailable),
    }
}

/// Fields `x_i` for every axis.
fn coords(disc: &Discretization) -> Vec<Vec<f64>> {
    (0..disc.dim()).map(|j| disc.coordinate(j)).collect()
}

/// `A x` as `d` fields.
fn rotation_field(disc: &Discretization, a: &DMatrix<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = disc.dim();
    let n = disc.n_nodes();
    (0..d)
        .map(|r| (0..n).map(|i| (0..d).map(|c| a[(r, c)] * x[c][i]).sum()).collect())
        .collect()
}

fn field_inner(disc: &Discretization, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| disc.grid.inner(u, v)).sum()
}

/// Coefficients of the special mode carrying the conserved quantities of `h0`.
pub fn conserved_mode(disc: &Discretization, h0: &KineticState, sym: Option<&SymmetryStructure>) -> Result<SpecialMode> {
    let sym = symmetry_for(disc, sym)?;
    let d = disc.dim();
    let df = d as f64;
    let fields = disc.macro_fields(h0);
    let freqs = sym.harmonic_frequencies.clone();
    let mut mode = SpecialMode::zero(d, freqs.clone(), sym.harmonic_indices.clone());
    mode.alpha = disc.avg(&fields.r);
    let ham = disc.hamiltonian();
    mode.beta = disc.inner(h0, &ham)? / disc.inner(&ham, &ham)?;
    let x = coords(disc);
    if !sym.rotation_basis.is_empty() {
        let k = sym.rotation_basis.len();
        let ax: Vec<Vec<Vec<f64>>> = sym.rotation_basis.iter().map(|a| rotation_field(disc, a, &x)).collect();
        let gram = DMatrix::from_fn(k, k, |i, j| field_inner(disc, &ax[i], &ax[j]));
        let rhs = DVector::from_fn(k, |i, _| field_inner(disc, &fields.m, &ax[i]));
        let theta = gram
            .cholesky()
            .ok_or_else(|| Error::DegenerateHessian("rotation Gram matrix is singular".into()))?
            .solve(&rhs);
        for (c, a) in theta.iter().zip(&sym.rotation_basis) {
            mode.rotation += a * *c;
        }
    }
    for &i in &sym.harmonic_indices {
        let rx: Vec<f64> = fields.r.iter().zip(&x[i]).map(|(a, b)| a * b).collect();
        mode.gamma[i] = freqs[i] * disc.avg(&rx);
        mode.gamma_bar[i] = disc.avg(&fields.m[i]);
    }
    if sym.has_pulsating() {
        let p = freqs[0];
        let mx: f64 = (0..d).map(|j| disc.grid.inner(&fields.m[j], &x[j])).sum();
        let r2: Vec<f64> = (0..disc.n_nodes()).map(|i| (0..d).map(|j| x[j][i] * x[j][i]).sum()).collect();
        let q = 0.5 * (p * p * disc.grid.inner(&fields.r, &r2) - df * mode.alpha) - (df / 2.0).sqrt() * disc.avg(&fields.e);
        mode.delta = p * mx / df.sqrt();
        mode.delta_bar = q / df.sqrt();
    }
    Ok(mode)
}

/// `h^par(t)` of a mode as a kinetic state (degrees at most two in `v`).
pub fn evaluate_mode(disc: &Discretization, mode: &SpecialMode, t: f64) -> KineticState {
    let (r, m, e) = mode_fields(disc, mode, t, false);
    let mut h = disc.from_macro(&r, &m, &e);
    h.t = t;
    h
}

/// Time derivative of `evaluate_mode`, from the analytic time laws.
pub fn evaluate_mode_dt(disc: &Discretization, mode: &SpecialMode, t: f64) -> KineticState {
    let (r, m, e) = mode_fields(disc, mode, t, true);
    let mut h = disc.from_macro(&r, &m, &e);
    h.t = t;
    h
}

fn mode_fields(disc: &Discretization, mode: &SpecialMode, t: f64, deriv: bool) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let d = disc.dim();
    let df = d as f64;
    let n = disc.n_nodes();
    let x = coords(disc);
    let mut r = vec![0.0; n];
    let mut m = vec![vec![0.0; n]; d];
    let mut e = vec![0.0; n];
    if !deriv {
        let xi = disc.xi_phi();
        for i in 0..n {
            r[i] = mode.alpha + mode.beta * xi[i];
            e[i] = mode.beta * (df / 2.0).sqrt();
        }
        let ax = rotation_field(disc, &mode.rotation, &x);
        for j in 0..d {
            for i in 0..n {
                m[j][i] += ax[j][i];
            }
        }
    }
    for j in 0..d {
        let p = mode.frequencies[j];
        let (g, gb) = (mode.gamma[j], mode.gamma_bar[j]);
        if g == 0.0 && gb == 0.0 {
            continue;
        }
        let (s, c) = (p * t).sin_cos();
        // r coefficient of p x_j, m_j coefficient
        let (rc, mc) = if deriv {
            (p * (-g * s + gb * c), -p * (gb * s + g * c))
        } else {
            (g * c + gb * s, gb * c - g * s)
        };
        for i in 0..n {
            r[i] += rc * p * x[j][i];
            m[j][i] += mc;
        }
    }
    if mode.delta != 0.0 || mode.delta_bar != 0.0 {
        let p = mode.pul_freq();
        let (mut cp, mut cq) = mode.pulsating_coefs(t);
        if deriv {
            let w = 2.0 * p;
            let (dp, dq) = (-w * cq, w * cp);
            cp = dp;
            cq = dq;
        }
        cp /= df.sqrt();
        cq /= df.sqrt();
        for i in 0..n {
            let r2: f64 = (0..d).map(|j| x[j][i] * x[j][i]).sum();
            r[i] += cq * 0.5 * (p * p * r2 - df);
            for j in 0..d {
                m[j][i] += cp * p * x[j][i];
            }
            e[i] -= (df / 2.0).sqrt() * cq;
        }
    }
    (r, m, e)
}

/// Named orthonormal generators of the special modes at `t = 0`.
#[derive(Clone, Debug)]
pub struct ModeGenerators {
    pub names: Vec<String>,
    pub states: Vec<KineticState>,
    /// The single-coefficient mode reproducing each generator.
    pub modes: Vec<SpecialMode>,
}

pub fn generators(disc: &Discretization, sym: &SymmetryStructure) -> Result<ModeGenerators> {
    let d = disc.dim();
    let base = SpecialMode::zero(d, sym.harmonic_frequencies.clone(), sym.harmonic_indices.clone());
    let mut names = Vec::new();
    let mut modes = Vec::new();
    let mut m1 = base.clone();
    m1.alpha = 1.0;
    names.push("maxwellian".to_string());
    modes.push(m1);
    let ham = disc.hamiltonian();
    let mut mh = base.clone();
    mh.beta = 1.0 / disc.norm(&ham);
    names.push("energy".to_string());
    modes.push(mh);
    let x = coords(disc);
    for (j, a) in sym.rotation_basis.iter().enumerate() {
        let ax = rotation_field(disc, a, &x);
        let nrm = field_inner(disc, &ax, &ax).sqrt();
        let mut mr = base.clone();
        mr.rotation = a / nrm;
        names.push(format!("rotation_{}", j + 1));
        modes.push(mr);
    }
    for &i in &sym.harmonic_indices {
        let mut mp = base.clone();
        mp.gamma[i] = 1.0;
        names.push(format!("directional+_{}", i + 1));
        modes.push(mp);
        let mut mm = base.clone();
        mm.gamma_bar[i] = 1.0;
        names.push(format!("directional-_{}", i + 1));
        modes.push(mm);
    }
    if sym.has_pulsating() {
        let mut mp = base.clone();
        mp.delta = 1.0;
        names.push("pulsating+".to_string());
        modes.push(mp);
        let mut mm = base;
        mm.delta_bar = 1.0;
        names.push("pulsating-".to_string());
        modes.push(mm);
    }
    let states = modes.iter().map(|m| evaluate_mode(disc, m, 0.0)).collect();
    Ok(ModeGenerators { names, states, modes })
}

/// Gram matrix of the generators in `L2(M)`.
pub fn orthonormality_gram(disc: &Discretization, gens: &ModeGenerators) -> Result<DMatrix<f64>> {
    let k = gens.states.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = disc.inner(&gens.states[i], &gens.states[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Residual norms of the mode equations at one time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeResiduals {
    /// `d_t r - grad^* . m`
    pub mass: f64,
    /// `d_t m + grad r - sqrt(2/d) e grad phi`
    pub momentum: f64,
    /// `d_t e + sqrt(2/d) div m`
    pub energy: f64,
    /// `(d_t e)/sqrt(2d) Id + sym grad m`
    pub strain: f64,
    /// `grad e`
    pub gradient_e: f64,
    /// `|| C F ||`
    pub collision: f64,
    /// `|| d_t F - T F ||`
    pub transport: f64,
}

impl ModeResiduals {
    pub fn max(&self) -> f64 {
        [self.mass, self.momentum, self.energy, self.strain, self.gradient_e, self.collision, self.transport]
            .iter()
            .fold(0.0f64, |a, &b| a.max(b))
    }
}

pub fn residual_mode_system(disc: &Discretization, mode: &SpecialMode, t: f64) -> Result<ModeResiduals> {
    let d = disc.dim();
    let df = d as f64;
    let n = disc.n_nodes();
    let g = &disc.grid;
    let h = evaluate_mode(disc, mode, t);
    let dh = evaluate_mode_dt(disc, mode, t);
    let f = disc.macro_fields(&h);
    let df_ = disc.macro_fields(&dh);
    let mut res = ModeResiduals::default();
    let mut div_star = vec![0.0; n];
    let mut div = vec![0.0; n];
    for j in 0..d {
        g.ops[j].apply_adjoint_add(&f.m[j], &mut div_star, 1.0);
        g.ops[j].apply_add(&f.m[j], &mut div, 1.0);
    }
    let a: Vec<f64> = (0..n).map(|i| df_.r[i] - div_star[i]).collect();
    res.mass = g.norm2(&a).sqrt();
    let mut mom = 0.0;
    let mut grad_e = 0.0;
    for j in 0..d {
        let dr = g.deriv(j, &f.r);
        let b: Vec<f64> = (0..n)
            .map(|i| df_.m[j][i] + dr[i] - (2.0 / df).sqrt() * f.e[i] * g.grad_phi[j][i])
            .collect();
        mom += g.norm2(&b);
        grad_e += g.norm2(&g.deriv(j, &f.e));
    }
    res.momentum = mom.sqrt();
    res.gradient_e = grad_e.sqrt();
    let c: Vec<f64> = (0..n).map(|i| df_.e[i] + (2.0 / df).sqrt() * div[i]).collect();
    res.energy = g.norm2(&c).sqrt();
    let dm: Vec<Vec<f64>> = (0..d * d).map(|k| g.deriv(k % d, &f.m[k / d])).collect();
    let mut strain = 0.0;
    for i in 0..d {
        for j in 0..d {
            let v: Vec<f64> = (0..n)
                .map(|a| {
                    let s = 0.5 * (dm[i * d + j][a] + dm[j * d + i][a]);
                    s + if i == j { df_.e[a] / (2.0 * df).sqrt() } else { 0.0 }
                })
                .collect();
            strain += g.norm2(&v);
        }
    }
    res.strain = strain.sqrt();
    let bgk = BgkOperator::new(disc, 1.0)?;
    res.collision = disc.norm(&bgk.apply(&h)?);
    let th = transport_apply(disc, &h)?;
    res.transport = disc.norm(&dh.sub(&th)?);
    Ok(res)
}

/// Sup over `times` of the `L2(rho)` residual of the finite-dimensional mode
/// equation, plus the consistency of `b'' = -p^2 b` and `c''' = -4p^2 c'`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OdeCheck {
    pub equation: f64,
    pub b_oscillator: f64,
    pub c_oscillator: f64,
}

pub fn ode_check(disc: &Discretization, mode: &SpecialMode, times: &[f64]) -> OdeCheck {
    let d = disc.dim();
    let df = d as f64;
    let n = disc.n_nodes();
    let g = &disc.grid;
    let x = coords(disc);
    let xi_phi = disc.xi_phi();
    let xi2 = disc.xi2();
    let ax = rotation_field(disc, &mode.rotation, &x);
    let p = mode.pul_freq();
    let mut out = OdeCheck::default();
    for &t in times {
        let b = mode.b(t);
        let b2 = mode.b2(t);
        let c = mode.c_derivs(t);
        let res: Vec<f64> = (0..n)
            .map(|i| {
                let gx: f64 = (0..d).map(|j| g.grad_phi[j][i] * x[j][i]).sum();
                let gb: f64 = (0..d).map(|j| g.grad_phi[j][i] * b[j]).sum();
                let b2x: f64 = (0..d).map(|j| b2[j] * x[j][i]).sum();
                let gax: f64 = (0..d).map(|j| g.grad_phi[j][i] * ax[j][i]).sum();
                (2.0 * xi_phi[i] + gx - df) / (2.0 * df).sqrt() * c[1] + xi2[i] / (2.0 * (2.0 * df).sqrt()) * c[3]
                    - gb
                    - b2x
                    - gax
            })
            .collect();
        out.equation = out.equation.max(g.norm2(&res).sqrt());
        let bo = (0..d)
            .map(|j| (b2[j] + mode.frequencies[j].powi(2) * b[j]).abs())
            .fold(0.0f64, f64::max);
        out.b_oscillator = out.b_oscillator.max(bo);
        out.c_oscillator = out.c_oscillator.max((c[3] + 4.0 * p * p * c[1]).abs());
    }
    out
}
