//! Constants behind the decay rate: Poincare and rigidity constants,
//! collision gap, and the fitted exponential decay of a trajectory.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::potential::{rotation_grams, skew_basis, MomentReport, Potential, SymmetryStructure};
use crate::witten::{InequalityReport, WittenOperator};

#[derive(Clone, Debug, PartialEq)]
pub struct PoincareResult {
    pub c_p: f64,
    /// `||Omega q - lambda q||` of the returned eigenvector.
    pub residual: f64,
    pub eigenvector: Vec<f64>,
}

/// `c_P = lambda_2 - 1` from the bottom of the spectrum of `Omega`.
pub fn poincare_constant(omega: &WittenOperator, weights: &[f64]) -> Result<PoincareResult> {
    let vals = omega.eigenvalues();
    if vals.len() < 2 {
        return Err(Error::EigendecompositionUnavailable("fewer than two eigenvalues".into()));
    }
    let gap = vals[1] - vals[0];
    if gap < 1e-10 * vals[1].abs().max(1.0) {
        return Err(Error::ClusterAtBottom(format!(
            "lambda_1 = {:.12}, lambda_2 = {:.12} are not resolved",
            vals[0], vals[1]
        )));
    }
    let q = omega.eigenvector(1);
    let oq = omega.apply(&q);
    let residual = oq
        .iter()
        .zip(&q)
        .zip(weights)
        .map(|((a, b), w)| w * (a - vals[1] * b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PoincareResult { c_p: vals[1] - 1.0, residual, eigenvector: q })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidityResult {
    pub c_k: f64,
    /// Minimizer, normalized by `<|A x|^2> = 1`.
    pub matrix: DMatrix<f64>,
}

/// `M`-orthonormal basis of the skew matrices orthogonal to the rotations of `phi`.
pub fn complement_basis(pot: &Potential, sym: &SymmetryStructure) -> Vec<DMatrix<f64>> {
    let mut basis: Vec<DMatrix<f64>> = Vec::new();
    // Rotations of phi first, so that the complement is orthogonal to them.
    let mut kept: Vec<DMatrix<f64>> = sym.rotation_basis.clone();
    let mass = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
        let (_, m) = rotation_grams(pot, &[a.clone(), b.clone()]);
        m[(0, 1)]
    };
    for cand in skew_basis(pot.dim) {
        let mut v = cand;
        for _ in 0..2 {
            for k in &kept {
                let c = mass(&v, k) / mass(k, k);
                v -= k * c;
            }
        }
        let nrm = mass(&v, &v).sqrt();
        if nrm > 1e-6 {
            v /= nrm;
            kept.push(v.clone());
            basis.push(v);
        }
    }
    basis
}

/// `c_K = min <|grad phi . A x|^2>` over `A` orthogonal to the rotations with `<|A x|^2> = 1`.
pub fn rigidity_constant(pot: &Potential, sym: &SymmetryStructure) -> Result<RigidityResult> {
    if pot.dim < 2 {
        return Err(Error::Undefined("no rotations in dimension one".into()));
    }
    let basis = complement_basis(pot, sym);
    if basis.is_empty() {
        return Err(Error::Undefined("every rotation leaves phi invariant".into()));
    }
    let (g, m) = rotation_grams(pot, &basis);
    // The basis is M-orthonormal up to quadrature; whiten to be exact.
    let chol = m.cholesky().ok_or_else(|| Error::DegenerateHessian("complement mass matrix".into()))?;
    let linv = chol.l().try_inverse().expect("invertible factor");
    let s = &linv * g * linv.transpose();
    let eig = SymmetricEigen::new((&s + s.transpose()) * 0.5);
    let (imin, c_k) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let coeff = linv.transpose() * eig.eigenvectors.column(imin);
    let mut a = DMatrix::zeros(pot.dim, pot.dim);
    for (c, b) in coeff.iter().zip(&basis) {
        a += b * *c;
    }
    Ok(RigidityResult { c_k, matrix: a })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStatus {
    Ok,
    OscillatoryOrPreasymptotic,
    AlreadyConverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub kappa: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub status: FitStatus,
}

/// Threshold under which a trajectory is considered to sit on its mode.
pub const CONVERGED_DIST: f64 = 1e-8;

/// Least-squares fit of `log dist_mode` against `t`.
///
/// Without an explicit window the fit uses the last two thirds of the
/// trajectory after `dist_mode` has dropped by one decade.
pub fn fit_decay(traj: &Trajectory, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let t = traj.times();
    let y = traj.column(|r| r.dist_mode);
    if t.is_empty() {
        return Err(Error::DegenerateWindow("empty trajectory".into()));
    }
    if y.iter().all(|v| *v < CONVERGED_DIST) {
        return Ok(DecayFit {
            c: 0.0,
            kappa: f64::NAN,
            r2: f64::NAN,
            window: (t[0], *t.last().unwrap()),
            samples: 0,
            status: FitStatus::AlreadyConverged,
        });
    }
    let (t0, t1) = match window {
        Some(w) => w,
        None => {
            let t_end = *t.last().unwrap();
            let start = t.iter().zip(&y).find(|(_, v)| **v <= 0.1 * y[0]).map(|(s, _)| *s).unwrap_or(t[0]);
            (start + (t_end - start) / 3.0, t_end)
        }
    };
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(&y)
        .filter(|(s, v)| **s >= t0 - 1e-12 && **s <= t1 + 1e-12 && **v > 0.0)
        .map(|(s, v)| (*s, v.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::DegenerateWindow(format!("{} samples in [{t0}, {t1}]", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let status = if r2 > 0.99 { FitStatus::Ok } else { FitStatus::OscillatoryOrPreasymptotic };
    Ok(DecayFit { c: intercept.exp(), kappa: -slope, r2, window: (t0, t1), samples: pts.len(), status })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub c_p: f64,
    pub c_p_residual: f64,
    pub c_k: Option<f64>,
    pub c_k_matrix: Option<DMatrix<f64>>,
    pub c_collision: f64,
    pub fit: Option<DecayFit>,
    pub moments: MomentReport,
    pub inequalities: Option<InequalityReport>,
}

impl SpectralReport {
    /// `kappa <= rate` and positivity of the constants.
    pub fn consistent(&self) -> bool {
        let fit_ok = match &self.fit {
            Some(f) if f.status == FitStatus::Ok => f.kappa <= self.c_collision * (1.0 + 1e-9),
            _ => true,
        };
        self.c_p > 0.0 && self.c_k.is_none_or(|c| c > 0.0) && fit_ok
    }

    /// Flat `key = value` text.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "c_p = {:.12e}", self.c_p);
        let _ = writeln!(s, "c_p_residual = {:.3e}", self.c_p_residual);
        match self.c_k {
            Some(c) => {
                let _ = writeln!(s, "c_k = {c:.12e}");
            }
            None => {
                let _ = writeln!(s, "c_k = undefined");
            }
        }
        if let Some(m) = &self.c_k_matrix {
            let flat: Vec<String> = m.row_iter().flat_map(|r| r.iter().map(|v| format!("{v:.9e}")).collect::<Vec<_>>()).collect();
            let _ = writeln!(s, "c_k_matrix = {}", flat.join(" "));
        }
        let _ = writeln!(s, "c_collision = {:.12e}", self.c_collision);
        if let Some(f) = &self.fit {
            let _ = writeln!(s, "fit_status = {:?}", f.status);
            let _ = writeln!(s, "fit_c = {:.9e}", f.c);
            let _ = writeln!(s, "kappa = {:.9e}", f.kappa);
            let _ = writeln!(s, "fit_r2 = {:.9}", f.r2);
            let _ = writeln!(s, "fit_window = {:.6} {:.6}", f.window.0, f.window.1);
        }
        let _ = writeln!(s, "moment_x4 = {:.9e}", self.moments.x4);
        let _ = writeln!(s, "moment_phi2 = {:.9e}", self.moments.phi2);
        let _ = writeln!(s, "moment_grad4 = {:.9e}", self.moments.grad4);
        if let Some(q) = &self.inequalities {
            let _ = writeln!(s, "poincare_min_ratio = {:.9e}", q.poincare_min_ratio);
            let _ = writeln!(s, "lions_lower = {:.9e}", q.lions_lower);
            let _ = writeln!(s, "lions_upper = {:.9e}", q.lions_upper);
            let _ = writeln!(s, "c_p1_empirical = {:.9e}", q.c_p1);
            match q.korn {
                Some(k) => {
                    let _ = writeln!(s, "korn_ratio = {k:.9e}");
                }
                None => {
                    let _ = writeln!(s, "korn_ratio = skipped");
                }
            }
        }
        s
    }
}
