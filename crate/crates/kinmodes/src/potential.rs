//! Confining potentials, their normalization and their symmetry structure.
//!
//! A [`RawPotential`] is whatever the user wrote down. [`normalize`] turns it
//! into a [`Potential`] whose density `rho = exp(-phi)` is a centred
//! probability density with averaged Hessian equal to the identity (or to
//! `diag(p_j^2)` in generalized mode).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes into the output slice: `d` entries for a gradient, `d*d` row-major for a Hessian.
pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Default relative threshold for numerical ranks.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Singular values on either side of the threshold must be separated by this factor.
pub const RANK_GAP: f64 = 1e3;
/// Boundary density ratio used to size the truncation box.
pub const BOUNDARY_RHO_RATIO: f64 = 1e-12;

/// Dense tensor of polynomial coefficients, evaluated by nested Horner sweeps.
///
/// Entry `coeffs[e_0 + (deg+1) e_1 + ...]` multiplies `x_0^e_0 x_1^e_1 ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTable {
    pub dim: usize,
    pub deg: usize,
    pub coeffs: Vec<f64>,
}

impl PolyTable {
    pub fn zeros(dim: usize, deg: usize) -> Self {
        PolyTable { dim, deg, coeffs: vec![0.0; (deg + 1).pow(dim as u32)] }
    }

    /// Builds a table from `(exponents, coefficient)` pairs.
    pub fn from_terms(dim: usize, terms: &[(Vec<usize>, f64)]) -> Self {
        let deg = terms.iter().flat_map(|(e, _)| e.iter().copied()).max().unwrap_or(0);
        let mut t = PolyTable::zeros(dim, deg);
        for (e, c) in terms {
            assert_eq!(e.len(), dim, "exponent vector has wrong length");
            let idx = t.index(e);
            t.coeffs[idx] += c;
        }
        t
    }

    /// Parses nested arrays of depth `dim`; the outer index is the exponent of `x_1`.
    pub fn from_nested(dim: usize, value: &serde_json::Value) -> Result<Self> {
        let mut terms = Vec::new();
        fn walk(
            v: &serde_json::Value,
            depth: usize,
            dim: usize,
            prefix: &mut Vec<usize>,
            out: &mut Vec<(Vec<usize>, f64)>,
        ) -> Result<()> {
            if depth == dim {
                let c = v.as_f64().ok_or_else(|| {
                    Error::Config(format!("polynomial coefficient at {prefix:?} is not a number"))
                })?;
                out.push((prefix.clone(), c));
                return Ok(());
            }
            let arr = v.as_array().ok_or_else(|| {
                Error::Config(format!("polynomial table must be nested {dim} levels deep"))
            })?;
            for (i, item) in arr.iter().enumerate() {
                prefix.push(i);
                walk(item, depth + 1, dim, prefix, out)?;
                prefix.pop();
            }
            Ok(())
        }
        walk(value, 0, dim, &mut Vec::new(), &mut terms)?;
        Ok(PolyTable::from_terms(dim, &terms))
    }

    fn index(&self, e: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &ej in e {
            idx += ej * stride;
            stride *= self.deg + 1;
        }
        idx
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        // Contract the last axis first; each pass shrinks the tensor by one axis.
        let n = self.deg + 1;
        let mut cur = self.coeffs.clone();
        for axis in (0..self.dim).rev() {
            let inner = n.pow(axis as u32);
            let mut next = vec![0.0; inner];
            for (j, slot) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for e in (0..n).rev() {
                    acc = acc * x[axis] + cur[j + e * inner];
                }
                *slot = acc;
            }
            cur = next;
        }
        cur[0]
    }

    pub fn derivative(&self, axis: usize) -> PolyTable {
        let mut out = PolyTable::zeros(self.dim, self.deg);
        let n = self.deg + 1;
        let stride = n.pow(axis as u32);
        for idx in 0..self.coeffs.len() {
            let e = (idx / stride) % n;
            if e > 0 {
                out.coeffs[idx - stride] += e as f64 * self.coeffs[idx];
            }
        }
        out
    }
}

/// Analytic family of the raw potential.
#[derive(Clone)]
pub enum Family {
    /// `|x|^2 / 2`
    FullyHarmonic,
    /// `sum_j p_j^2 x_j^2 / 2`
    AnisotropicHarmonic { p: Vec<f64> },
    /// `(1 + |a x|^2)^(gamma/2) - z`
    PowerLaw { gamma: f64, a: f64, z: f64 },
    Polynomial(PolyTable),
    /// `sum_k c_k |x|^(2k)`
    RadialPolynomial { coeffs: Vec<f64> },
    /// User callbacks; the gradient and Hessian must be analytic.
    Custom { name: String, phi: ScalarFn, grad: FieldFn, hess: FieldFn },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::FullyHarmonic => write!(f, "FullyHarmonic"),
            Family::AnisotropicHarmonic { p } => write!(f, "AnisotropicHarmonic({p:?})"),
            Family::PowerLaw { gamma, a, z } => write!(f, "PowerLaw(gamma={gamma}, a={a}, z={z})"),
            Family::Polynomial(t) => write!(f, "Polynomial(deg={})", t.deg),
            Family::RadialPolynomial { coeffs } => write!(f, "RadialPolynomial({coeffs:?})"),
            Family::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl Family {
    pub fn name(&self) -> String {
        match self {
            Family::FullyHarmonic => "fully_harmonic".into(),
            Family::AnisotropicHarmonic { .. } => "anisotropic_harmonic".into(),
            Family::PowerLaw { .. } => "powerlaw".into(),
            Family::Polynomial(_) => "polynomial".into(),
            Family::RadialPolynomial { .. } => "radial_polynomial".into(),
            Family::Custom { name, .. } => format!("custom:{name}"),
        }
    }
}

/// A potential in the user's coordinates, before normalization.
#[derive(Clone, Debug)]
pub struct RawPotential {
    pub dim: usize,
    pub family: Family,
    poly_grad: Vec<PolyTable>,
    poly_hess: Vec<PolyTable>,
}

impl RawPotential {
    pub fn new(dim: usize, family: Family) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        match &family {
            Family::AnisotropicHarmonic { p } if p.len() != dim || p.iter().any(|&q| !(q > 0.0)) => {
                return Err(Error::Config(format!("need {dim} positive frequencies, got {p:?}")));
            }
            Family::PowerLaw { gamma, a, .. } if !(*gamma > 1.0) || *a == 0.0 => {
                return Err(Error::Config(format!("power law needs gamma > 1 and a != 0 (gamma={gamma}, a={a})")));
            }
            Family::Polynomial(t) if t.dim != dim => {
                return Err(Error::Config("polynomial table dimension mismatch".into()));
            }
            _ => {}
        }
        let (poly_grad, poly_hess) = match &family {
            Family::Polynomial(t) => {
                let g: Vec<PolyTable> = (0..dim).map(|j| t.derivative(j)).collect();
                let h = (0..dim * dim).map(|k| g[k / dim].derivative(k % dim)).collect();
                (g, h)
            }
            _ => (Vec::new(), Vec::new()),
        };
        Ok(RawPotential { dim, family, poly_grad, poly_hess })
    }

    pub fn fully_harmonic(dim: usize) -> Self {
        RawPotential::new(dim, Family::FullyHarmonic).expect("valid family")
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        match &self.family {
            Family::FullyHarmonic => 0.5 * r2,
            Family::AnisotropicHarmonic { p } => 0.5 * y.iter().zip(p).map(|(v, q)| q * q * v * v).sum::<f64>(),
            Family::PowerLaw { gamma, a, z } => (1.0 + a * a * r2).powf(0.5 * gamma) - z,
            Family::Polynomial(t) => t.eval(y),
            Family::RadialPolynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * r2 + c),
            Family::Custom { phi, .. } => phi(y),
        }
    }

    pub fn grad(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let r2: f64 = y.iter().map(|v| v * v).sum();
        match &self.family {
            Family::FullyHarmonic => out[..d].copy_from_slice(y),
            Family::AnisotropicHarmonic { p } => {
                for j in 0..d {
                    out[j] = p[j] * p[j] * y[j];
                }
            }
            Family::PowerLaw { gamma, a, .. } => {
                let s = 1.0 + a * a * r2;
                let f = gamma * a * a * s.powf(0.5 * gamma - 1.0);
                for j in 0..d {
                    out[j] = f * y[j];
                }
            }
            Family::Polynomial(_) => {
                for j in 0..d {
                    out[j] = self.poly_grad[j].eval(y);
                }
            }
            Family::RadialPolynomial { coeffs } => {
                let f = radial_dprime(coeffs, r2);
                for j in 0..d {
                    out[j] = f * y[j];
                }
            }
            Family::Custom { grad, .. } => grad(y, out),
        }
    }

    pub fn hess(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let r2: f64 = y.iter().map(|v| v * v).sum();
        out[..d * d].iter_mut().for_each(|o| *o = 0.0);
        match &self.family {
            Family::FullyHarmonic => {
                for j in 0..d {
                    out[j * d + j] = 1.0;
                }
            }
            Family::AnisotropicHarmonic { p } => {
                for j in 0..d {
                    out[j * d + j] = p[j] * p[j];
                }
            }
            Family::PowerLaw { gamma, a, .. } => {
                let s = 1.0 + a * a * r2;
                let f1 = gamma * a * a * s.powf(0.5 * gamma - 1.0);
                let f2 = gamma * (gamma - 2.0) * a.powi(4) * s.powf(0.5 * gamma - 2.0);
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = f2 * y[i] * y[j] + if i == j { f1 } else { 0.0 };
                    }
                }
            }
            Family::Polynomial(_) => {
                for k in 0..d * d {
                    out[k] = self.poly_hess[k].eval(y);
                }
            }
            Family::RadialPolynomial { coeffs } => {
                // phi = P(r2): grad = 2 P'(r2) y, hess = 2 P' I + 4 P'' y y^T
                let f1 = radial_dprime(coeffs, r2);
                let f2 = radial_d2prime(coeffs, r2);
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = f2 * y[i] * y[j] + if i == j { f1 } else { 0.0 };
                    }
                }
            }
            Family::Custom { hess, .. } => hess(y, out),
        }
    }
}

/// `2 P'(r2)` for `P(s) = sum_k c_k s^k`.
fn radial_dprime(c: &[f64], r2: f64) -> f64 {
    let mut acc = 0.0;
    for k in (1..c.len()).rev() {
        acc = acc * r2 + 2.0 * k as f64 * c[k];
    }
    acc
}

/// `4 P''(r2)`.
fn radial_d2prime(c: &[f64], r2: f64) -> f64 {
    let mut acc = 0.0;
    for k in (2..c.len()).rev() {
        acc = acc * r2 + 4.0 * (k * (k - 1)) as f64 * c[k];
    }
    acc
}

/// Tensor trapezoid rule with `rho` folded into the weights.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub dim: usize,
    /// Flattened points, `dim` entries each.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn average<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }
}

/// Moment bounds reported for a normalized potential.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MomentReport {
    pub x4: f64,
    pub phi2: f64,
    pub grad4: f64,
}

impl MomentReport {
    pub fn total(&self) -> f64 {
        self.x4 + self.phi2 + self.grad4
    }
}

/// Options for [`normalize`].
#[derive(Clone, Copy, Debug)]
pub struct NormalizeOptions {
    /// Keep `<Hess phi> = diag(p_j^2)` instead of rescaling to the identity.
    pub generalized: bool,
    pub quad_tol: f64,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions { generalized: false, quad_tol: 1e-8 }
    }
}

/// A normalized potential `phi(x) = phi_raw(center + scale x) + shift`.
#[derive(Clone, Debug)]
pub struct Potential {
    pub dim: usize,
    pub raw: RawPotential,
    pub shift: f64,
    pub center: Vec<f64>,
    /// Maps normalized to raw coordinates: `y = center + scale x`.
    pub scale: DMatrix<f64>,
    scale_inv: DMatrix<f64>,
    pub generalized: bool,
    /// Diagonal of `<Hess phi>` in normalized coordinates (all ones unless generalized).
    pub freq_sq: Vec<f64>,
    /// Minimum of `phi` over the sampled region.
    pub phi_min: f64,
    /// Half-width of the cube on whose boundary `rho` falls below the boundary ratio.
    pub half_width: f64,
    /// The same criterion applied to each pair of faces separately.
    pub half_widths: Vec<f64>,
    pub quad_tol: f64,
    pub quadrature: Quadrature,
    pub moments: MomentReport,
}

fn tensor_points(dim: usize, n: usize, lo: &[f64], hi: &[f64], mut f: impl FnMut(&[f64], f64)) {
    let h: Vec<f64> = (0..dim).map(|j| (hi[j] - lo[j]) / (n - 1) as f64).collect();
    let total = n.pow(dim as u32);
    let mut x = vec![0.0; dim];
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        for j in 0..dim {
            let i = rem % n;
            rem /= n;
            x[j] = lo[j] + i as f64 * h[j];
            w *= h[j] * if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        }
        f(&x, w);
    }
}

struct RawMoments {
    log_z: f64,
    mean: Vec<f64>,
    hess: DMatrix<f64>,
}

fn raw_moments(raw: &RawPotential, lo: &[f64], hi: &[f64], n: usize, phi_min: f64) -> Result<RawMoments> {
    let d = raw.dim;
    let mut z = 0.0;
    let mut mean = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    let mut hbuf = vec![0.0; d * d];
    let mut bad = false;
    tensor_points(d, n, lo, hi, |y, w| {
        let p = raw.value(y);
        if p.is_nan() {
            bad = true;
            return;
        }
        let r = (-(p - phi_min)).exp() * w;
        if r == 0.0 {
            return;
        }
        z += r;
        for j in 0..d {
            mean[j] += r * y[j];
        }
        raw.hess(y, &mut hbuf);
        for k in 0..d * d {
            hess[(k / d, k % d)] += r * hbuf[k];
        }
    });
    if bad || !(z > 0.0) || !z.is_finite() {
        return Err(Error::NonIntegrable("density quadrature is not finite".into()));
    }
    mean.iter_mut().for_each(|m| *m /= z);
    hess /= z;
    Ok(RawMoments { log_z: z.ln() - phi_min, mean, hess })
}

/// Normalizes a raw potential: centre, unit mass and averaged Hessian.
pub fn normalize(raw: &RawPotential, opts: NormalizeOptions) -> Result<Potential> {
    let d = raw.dim;
    let n0: usize = match d {
        1 => 2001,
        2 => 201,
        _ => 41,
    };
    // Grow a box until the density is negligible on its boundary.
    let mut r = 4.0;
    let (phi_min, lo, hi) = loop {
        let lo = vec![-r; d];
        let hi = vec![r; d];
        let mut pmin = f64::INFINITY;
        let mut bmin = f64::INFINITY;
        let mut nan = false;
        let step = 2.0 * r / (n0 - 1) as f64;
        let mut vals = Vec::with_capacity(n0.pow(d as u32));
        tensor_points(d, n0, &lo, &hi, |y, _| {
            let p = raw.value(y);
            if p.is_nan() {
                nan = true;
            }
            vals.push(p);
            pmin = pmin.min(p);
            if y.iter().any(|&c| (c.abs() - r).abs() < 0.5 * step) {
                bmin = bmin.min(p);
            }
        });
        if nan || pmin == f64::NEG_INFINITY {
            return Err(Error::NonIntegrable("potential is not finite on the search box".into()));
        }
        if bmin - pmin > 40.0 {
            // Bounding box of the region carrying mass, padded by one cell.
            let mut blo = vec![f64::INFINITY; d];
            let mut bhi = vec![f64::NEG_INFINITY; d];
            let mut k = 0;
            tensor_points(d, n0, &lo, &hi, |y, _| {
                if vals[k] - pmin < 40.0 {
                    for j in 0..d {
                        blo[j] = blo[j].min(y[j] - step);
                        bhi[j] = bhi[j].max(y[j] + step);
                    }
                }
                k += 1;
            });
            break (pmin, blo, bhi);
        }
        r *= 2.0;
        if r > 4096.0 {
            return Err(Error::NonIntegrable("density does not decay on growing domains".into()));
        }
    };

    let mut n = match d {
        1 => 2001,
        2 => 201,
        _ => 41,
    };
    let mut prev = raw_moments(raw, &lo, &hi, n, phi_min)?;
    let moments = loop {
        n = 2 * n - 1;
        let cur = raw_moments(raw, &lo, &hi, n, phi_min)?;
        if (cur.log_z - prev.log_z).abs() <= 1e-3 * opts.quad_tol {
            break cur;
        }
        if n > 20000 {
            return Err(Error::NonIntegrable("density quadrature does not converge".into()));
        }
        prev = cur;
    };

    let eig = SymmetricEigen::new(moments.hess.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if !lmax.is_finite() || eig.eigenvalues.iter().any(|&l| !(l > 1e-12 * lmax)) {
        return Err(Error::DegenerateHessian(format!("eigenvalues {:?}", eig.eigenvalues.as_slice())));
    }
    // Match eigenvectors to the coordinate axes they are closest to.
    let mut order = vec![usize::MAX; d];
    let mut used = vec![false; d];
    for axis in 0..d {
        let mut best = (usize::MAX, -1.0);
        for col in 0..d {
            if !used[col] && eig.eigenvectors[(axis, col)].abs() > best.1 {
                best = (col, eig.eigenvectors[(axis, col)].abs());
            }
        }
        used[best.0] = true;
        order[axis] = best.0;
    }
    let mut q = DMatrix::zeros(d, d);
    let mut lam = vec![0.0; d];
    for axis in 0..d {
        let col = order[axis];
        let sign = if eig.eigenvectors[(axis, col)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            q[(i, axis)] = sign * eig.eigenvectors[(i, col)];
        }
        lam[axis] = eig.eigenvalues[col];
    }
    let (scale, freq_sq) = if opts.generalized {
        (q.clone(), lam.clone())
    } else {
        let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(d, lam.iter().map(|l| 1.0 / l.sqrt())));
        (&q * inv_sqrt * q.transpose(), vec![1.0; d])
    };
    let det = scale.determinant().abs();
    let scale_inv = scale.clone().try_inverse().ok_or_else(|| Error::DegenerateHessian("singular scale".into()))?;
    let shift = moments.log_z - det.ln();

    let mut pot = Potential {
        dim: d,
        raw: raw.clone(),
        shift,
        center: moments.mean,
        scale,
        scale_inv,
        generalized: opts.generalized,
        freq_sq,
        phi_min: phi_min + shift,
        half_width: 0.0,
        half_widths: Vec::new(),
        quad_tol: opts.quad_tol,
        quadrature: Quadrature { dim: d, points: Vec::new(), weights: Vec::new() },
        moments: MomentReport::default(),
    };
    pot.half_width = pot.find_half_width()?;
    pot.half_widths = (0..d).map(|j| pot.axis_half_width(j)).collect();
    pot.quadrature = pot.build_quadrature(match d {
        1 => 2001,
        2 => 241,
        _ => 61,
    });
    let mass: f64 = pot.quadrature.weights.iter().sum();
    if (mass - 1.0).abs() > 10.0 * opts.quad_tol {
        return Err(Error::NonIntegrable(format!("normalized mass is {mass}")));
    }
    for j in 0..d {
        let m = pot.quadrature.average(|x| x[j]);
        if m.abs() > 10.0 * opts.quad_tol {
            return Err(Error::NonIntegrable(format!("normalized mean along axis {j} is {m}")));
        }
    }
    let mut g = vec![0.0; d];
    let q = &pot.quadrature;
    let mut mom = MomentReport::default();
    for i in 0..q.len() {
        let x = q.point(i);
        let w = q.weights[i];
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let p = pot.phi(x);
        pot.grad(x, &mut g);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        mom.x4 += w * r2 * r2;
        mom.phi2 += w * p * p;
        mom.grad4 += w * g2 * g2;
    }
    pot.moments = mom;
    Ok(pot)
}

impl Potential {
    pub fn to_raw(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let y = &self.scale * xv;
        (0..self.dim).map(|j| y[j] + self.center[j]).collect()
    }

    pub fn from_raw(&self, y: &[f64]) -> Vec<f64> {
        let yv = DVector::from_iterator(self.dim, (0..self.dim).map(|j| y[j] - self.center[j]));
        (&self.scale_inv * yv).iter().copied().collect()
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.raw.value(&self.to_raw(x)) + self.shift
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        (-self.phi(x)).exp()
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let y = self.to_raw(x);
        let mut gy = vec![0.0; d];
        self.raw.grad(&y, &mut gy);
        for j in 0..d {
            out[j] = (0..d).map(|i| self.scale[(i, j)] * gy[i]).sum();
        }
    }

    pub fn hess(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let y = self.to_raw(x);
        let mut hy = vec![0.0; d * d];
        self.raw.hess(&y, &mut hy);
        let h = DMatrix::from_row_slice(d, d, &hy);
        let hx = self.scale.transpose() * h * &self.scale;
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = hx[(i, j)];
            }
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut h = vec![0.0; d * d];
        self.hess(x, &mut h);
        (0..d).map(|j| h[j * d + j]).sum()
    }

    /// Harmonic frequencies `p_j = sqrt(<d_jj phi>)`.
    pub fn frequencies(&self) -> Vec<f64> {
        self.freq_sq.iter().map(|v| v.sqrt()).collect()
    }

    /// Tensor trapezoid rule on `[-L, L]^d` with `rho` folded into the weights.
    pub fn build_quadrature(&self, n: usize) -> Quadrature {
        let d = self.dim;
        let l = self.half_width;
        let mut points = Vec::with_capacity(n.pow(d as u32) * d);
        let mut weights = Vec::with_capacity(n.pow(d as u32));
        tensor_points(d, n, &vec![-l; d], &vec![l; d], |x, w| {
            points.extend_from_slice(x);
            weights.push(w * self.rho(x));
        });
        Quadrature { dim: d, points, weights }
    }

    /// Average `<f>` against `rho` with the stored quadrature.
    pub fn average<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.quadrature.average(f)
    }

    /// Smallest `l <= half_width` with `phi - phi_min` above the boundary
    /// threshold on both faces `x_axis = +-l`, the other coordinates ranging
    /// over the cube.
    fn axis_half_width(&self, axis: usize) -> f64 {
        let d = self.dim;
        let target = BOUNDARY_RHO_RATIO.recip().ln();
        let big = self.half_width;
        let m: usize = match d {
            1 => 1,
            2 => 201,
            _ => 41,
        };
        let count = m.pow(d as u32 - 1);
        let mut x = vec![0.0; d];
        let mut l = 0.5;
        while l < big {
            let mut bmin = f64::INFINITY;
            for side in [-l, l] {
                for idx in 0..count {
                    let mut rem = idx;
                    for j in 0..d {
                        if j == axis {
                            x[j] = side;
                        } else {
                            let i = rem % m;
                            rem /= m;
                            x[j] = -big + 2.0 * big * i as f64 / (m - 1) as f64;
                        }
                    }
                    bmin = bmin.min(self.phi(&x));
                }
            }
            if bmin - self.phi_min >= target {
                return l;
            }
            l += 0.05;
        }
        big
    }

    fn find_half_width(&self) -> Result<f64> {
        let d = self.dim;
        let target = BOUNDARY_RHO_RATIO.recip().ln();
        let m: usize = match d {
            1 => 1,
            2 => 201,
            _ => 41,
        };
        let mut l = 0.5;
        while l < 200.0 {
            let mut bmin = f64::INFINITY;
            // Sample every face of the cube.
            for axis in 0..d {
                for side in [-l, l] {
                    let others = d - 1;
                    let count = m.pow(others as u32);
                    let mut x = vec![0.0; d];
                    for idx in 0..count {
                        let mut rem = idx;
                        for j in 0..d {
                            if j == axis {
                                x[j] = side;
                            } else {
                                let i = rem % m;
                                rem /= m;
                                x[j] = if m == 1 { 0.0 } else { -l + 2.0 * l * i as f64 / (m - 1) as f64 };
                            }
                        }
                        bmin = bmin.min(self.phi(&x));
                    }
                }
            }
            if bmin - self.phi_min >= target {
                return Ok(l);
            }
            l += 0.05;
        }
        Err(Error::NonIntegrable("could not find a truncation box".into()))
    }
}

/// Detected symmetry structure of a normalized potential.
#[derive(Clone, Debug)]
pub struct SymmetryStructure {
    pub dim: usize,
    /// Axes `i` with `d_i phi = p_i^2 x_i` (zero-based).
    pub harmonic_indices: Vec<usize>,
    pub d_phi: usize,
    /// `p_j` for every axis; only entries in `harmonic_indices` carry modes.
    pub harmonic_frequencies: Vec<f64>,
    /// Skew matrices spanning the rotations compatible with `phi`,
    /// orthonormal in `<Ax . Bx>_rho`.
    pub rotation_basis: Vec<DMatrix<f64>>,
    /// Orthonormal complement of `rotation_basis` in the skew space.
    pub rotation_complement: Vec<DMatrix<f64>>,
    pub detection_tolerance: f64,
}

impl SymmetryStructure {
    /// Runs both detections with the same tolerance.
    pub fn detect(pot: &Potential, tol: f64) -> Result<Self> {
        let mut s = detect_harmonic_directions(pot, tol)?;
        let (basis, complement) = detect_rotations(pot, tol)?;
        s.rotation_basis = basis;
        s.rotation_complement = complement;
        Ok(s)
    }

    /// Pulsating modes need every direction harmonic with one common frequency.
    pub fn has_pulsating(&self) -> bool {
        if self.d_phi != 0 {
            return false;
        }
        let p0 = self.harmonic_frequencies[0];
        self.harmonic_frequencies.iter().all(|p| (p - p0).abs() <= 1e-10 * p0.max(1.0))
    }

    pub fn is_harmonic(&self, axis: usize) -> bool {
        self.harmonic_indices.contains(&axis)
    }
}

/// Counts singular values above `tol * reference`, enforcing a clear gap.
pub fn numerical_rank(values: &[f64], reference: f64, tol: f64) -> Result<usize> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let thr = tol * reference;
    let rank = v.iter().filter(|&&s| s >= thr).count();
    if rank > 0 && rank < v.len() {
        let gap = v[rank - 1] / v[rank].max(f64::MIN_POSITIVE);
        if gap <= RANK_GAP {
            return Err(Error::AmbiguousRank(format!(
                "singular values {:e} and {:e} straddle the threshold {:e} with gap {:.3e}",
                v[rank - 1], v[rank], thr, gap
            )));
        }
    }
    if rank == v.len() && rank > 0 && v[rank - 1] < RANK_GAP * thr {
        return Err(Error::AmbiguousRank(format!(
            "smallest singular value {:e} lies within {RANK_GAP:e} of the threshold {thr:e}",
            v[rank - 1]
        )));
    }
    Ok(rank)
}

/// Estimates `E_phi = span{grad phi - diag(p^2) x}` and the harmonic axes.
pub fn detect_harmonic_directions(pot: &Potential, tol: f64) -> Result<SymmetryStructure> {
    let d = pot.dim;
    let q = &pot.quadrature;
    let mut a = DMatrix::zeros(q.len(), d);
    let mut g = vec![0.0; d];
    let mut grad_scale = 0.0;
    for i in 0..q.len() {
        let x = q.point(i);
        let sw = q.weights[i].max(0.0).sqrt();
        pot.grad(x, &mut g);
        for j in 0..d {
            a[(i, j)] = sw * (g[j] - pot.freq_sq[j] * x[j]);
            grad_scale += q.weights[i] * g[j] * g[j];
        }
    }
    let grad_scale = grad_scale.sqrt();
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0f64, |m, &s| m.max(s));
    let reference = smax.max(grad_scale);
    let d_phi = numerical_rank(sv.as_slice(), reference, tol)?;
    let harmonic_indices: Vec<usize> = (0..d)
        .filter(|&j| a.column(j).norm() < tol * reference)
        .collect();
    if harmonic_indices.len() != d - d_phi {
        return Err(Error::AmbiguousRank(format!(
            "harmonic directions are not aligned with the coordinate axes (rank {d_phi}, aligned axes {harmonic_indices:?})"
        )));
    }
    Ok(SymmetryStructure {
        dim: d,
        harmonic_indices,
        d_phi,
        harmonic_frequencies: pot.frequencies(),
        rotation_basis: Vec::new(),
        rotation_complement: Vec::new(),
        detection_tolerance: tol,
    })
}

/// Canonical basis `E_ab = e_a e_b^T - e_b e_a^T`, `a < b`, of the skew matrices.
pub fn skew_basis(d: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            let mut m = DMatrix::zeros(d, d);
            m[(a, b)] = 1.0;
            m[(b, a)] = -1.0;
            out.push(m);
        }
    }
    out
}

/// Gram matrices `G_AB = <(grad phi . Ax)(grad phi . Bx)>` and `M_AB = <Ax . Bx>`.
pub fn rotation_grams(pot: &Potential, basis: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = pot.dim;
    let k = basis.len();
    let q = &pot.quadrature;
    let mut g = DMatrix::zeros(k, k);
    let mut m = DMatrix::zeros(k, k);
    let mut grad = vec![0.0; d];
    let mut ax = vec![vec![0.0; d]; k];
    let mut s = vec![0.0; k];
    for i in 0..q.len() {
        let x = q.point(i);
        let w = q.weights[i];
        pot.grad(x, &mut grad);
        for (b, mat) in basis.iter().enumerate() {
            for r in 0..d {
                ax[b][r] = (0..d).map(|c| mat[(r, c)] * x[c]).sum();
            }
            s[b] = (0..d).map(|r| grad[r] * ax[b][r]).sum();
        }
        for p in 0..k {
            for l in 0..k {
                g[(p, l)] += w * s[p] * s[l];
                m[(p, l)] += w * (0..d).map(|r| ax[p][r] * ax[l][r]).sum::<f64>();
            }
        }
    }
    (g, m)
}

/// Splits the skew space into rotations compatible with `phi` and their complement.
pub fn detect_rotations(pot: &Potential, tol: f64) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let d = pot.dim;
    let basis = skew_basis(d);
    if basis.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let (g, m) = rotation_grams(pot, &basis);
    let chol = m.clone().cholesky().ok_or_else(|| Error::DegenerateHessian("rotation mass matrix".into()))?;
    let linv = chol.l().try_inverse().expect("cholesky factor is invertible");
    let s = &linv * g * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let grad2 = pot.average(|x| {
        let mut gr = vec![0.0; d];
        pot.grad(x, &mut gr);
        gr.iter().map(|v| v * v).sum::<f64>()
    });
    let reference = lmax.max(grad2 / d as f64);
    let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    numerical_rank(&vals, reference, tol)?;
    let thr = tol * reference;
    let mut zero = Vec::new();
    let mut rest = Vec::new();
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    for i in idx {
        let coeff = linv.transpose() * eig.eigenvectors.column(i);
        let mut a = DMatrix::zeros(d, d);
        for (c, e) in coeff.iter().zip(&basis) {
            a += e * *c;
        }
        if vals[i] < thr {
            zero.push(a);
        } else {
            rest.push(a);
        }
    }
    Ok((zero, rest))
}
