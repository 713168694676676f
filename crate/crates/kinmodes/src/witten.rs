//! Discrete weighted Laplacian `Omega = grad^* . grad + 1` on `L2(rho)`.
//!
//! The operator is assembled in flat form: with `s = exp(-(phi - phi_min)/2)`
//! and `g = s u`, `Omega u = s^-1 (sum_j a_j^T a_j + 1) g`, where `a_j` maps
//! node values to the midpoints of axis `j` and discretizes
//! `d_j + (d_j phi)/2`. The staggered factor is built so that `a_j s = 0`
//! exactly, hence `Omega 1 = 1` and the bottom eigenvalue is one. Using
//! midpoints avoids the odd-even kernel of a collocated product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

/// Largest node count handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 1024;
/// Default size of the partial spectrum.
pub const DEFAULT_PARTIAL: usize = 200;

const STAG_D: [f64; 4] = [1.0 / 24.0, -27.0 / 24.0, 27.0 / 24.0, -1.0 / 24.0];
const STAG_I: [f64; 4] = [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0];

#[derive(Clone, Debug)]
struct MidRow {
    start: usize,
    len: usize,
    coef: [f64; 4],
}

#[derive(Clone, Debug)]
struct AxisFactor {
    stride: usize,
    /// Rows indexed by the node of the left end of each midpoint; `None` past the last.
    rows: Vec<Option<MidRow>>,
}

/// Which part of the spectrum is cached.
#[derive(Clone, Debug)]
pub enum Spectrum {
    /// All eigenpairs; vectors are orthonormal columns in the flat product.
    Full { values: Vec<f64>, vectors: DMatrix<f64> },
    /// The lowest converged eigenpairs.
    Partial { values: Vec<f64>, vectors: DMatrix<f64> },
}

#[derive(Clone, Debug)]
pub struct WittenOperator {
    pub dim: usize,
    pub n: usize,
    pub n_nodes: usize,
    /// `exp(-(phi - phi_min)/2)` at the nodes.
    pub s: Vec<f64>,
    /// `dx^d exp(-phi_min)`, the factor between flat and weighted products.
    pub flat_scale: f64,
    axes: Vec<AxisFactor>,
    pub spectrum: Spectrum,
    pub cg_tol: f64,
}

/// How much of the spectrum to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumRequest {
    /// Dense when the grid allows it, otherwise an error.
    Dense,
    /// Lowest `k` eigenpairs by shift-invert Lanczos.
    Partial(usize),
    /// Dense below `DENSE_LIMIT` nodes, partial above.
    Auto,
}

impl WittenOperator {
    pub fn new(grid: &SpatialGrid, request: SpectrumRequest) -> Result<Self> {
        let d = grid.dim;
        let n = grid.n;
        let total = grid.len();
        let phi_min = grid.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        let s: Vec<f64> = grid.phi.iter().map(|p| (-(p - phi_min) / 2.0).exp()).collect();
        let mut axes = Vec::with_capacity(d);
        for j in 0..d {
            let inv_dx = 1.0 / grid.dxs[j];
            let stride = n.pow(j as u32);
            let mut rows = vec![None; total];
            for node in 0..total {
                let i = (node / stride) % n;
                if i + 1 >= n {
                    continue;
                }
                let row = if i == 0 || i + 2 == n {
                    let dw = [-inv_dx, inv_dx];
                    let iw = [0.5, 0.5];
                    let ds = dw[0] * s[node] + dw[1] * s[node + stride];
                    let is = iw[0] * s[node] + iw[1] * s[node + stride];
                    let c = -ds / is;
                    MidRow { start: node, len: 2, coef: [dw[0] + c * iw[0], dw[1] + c * iw[1], 0.0, 0.0] }
                } else {
                    let start = node - stride;
                    let mut ds = 0.0;
                    let mut is = 0.0;
                    for t in 0..4 {
                        ds += STAG_D[t] * inv_dx * s[start + t * stride];
                        is += STAG_I[t] * s[start + t * stride];
                    }
                    let c = -ds / is;
                    let mut coef = [0.0; 4];
                    for t in 0..4 {
                        coef[t] = STAG_D[t] * inv_dx + c * STAG_I[t];
                    }
                    MidRow { start, len: 4, coef }
                };
                rows[node] = Some(row);
            }
            axes.push(AxisFactor { stride, rows });
        }
        let mut op = WittenOperator {
            dim: d,
            n,
            n_nodes: total,
            s,
            flat_scale: grid.dxs.iter().product::<f64>() * (-phi_min).exp(),
            axes,
            spectrum: Spectrum::Partial { values: Vec::new(), vectors: DMatrix::zeros(total, 0) },
            cg_tol: 1e-13,
        };
        let dense = match request {
            SpectrumRequest::Dense => {
                if total > DENSE_LIMIT {
                    return Err(Error::EigendecompositionUnavailable(format!(
                        "{total} nodes exceed the dense limit {DENSE_LIMIT}; request a partial spectrum"
                    )));
                }
                true
            }
            SpectrumRequest::Partial(_) => false,
            SpectrumRequest::Auto => total <= DENSE_LIMIT,
        };
        if dense {
            let m = op.flat_matrix();
            let eig = SymmetricEigen::new(m);
            let mut idx: Vec<usize> = (0..total).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
            let vectors = DMatrix::from_fn(total, total, |r, c| eig.eigenvectors[(r, idx[c])]);
            op.spectrum = Spectrum::Full { values, vectors };
        } else {
            let k = match request {
                SpectrumRequest::Partial(k) => k,
                _ => DEFAULT_PARTIAL,
            };
            let (values, vectors) = op.lanczos_lowest(k.min(total))?;
            op.spectrum = Spectrum::Partial { values, vectors };
        }
        Ok(op)
    }

    /// `a_j g` on the midpoints (entries without a midpoint are zero).
    fn apply_a(&self, axis: usize, g: &[f64], out: &mut [f64]) {
        let ax = &self.axes[axis];
        for (m, row) in ax.rows.iter().enumerate() {
            out[m] = match row {
                Some(r) => (0..r.len).map(|t| r.coef[t] * g[r.start + t * ax.stride]).sum(),
                None => 0.0,
            };
        }
    }

    fn apply_at_add(&self, axis: usize, mid: &[f64], out: &mut [f64]) {
        let ax = &self.axes[axis];
        for (m, row) in ax.rows.iter().enumerate() {
            if let Some(r) = row {
                for t in 0..r.len {
                    out[r.start + t * ax.stride] += r.coef[t] * mid[m];
                }
            }
        }
    }

    /// Flat operator `sum_j a_j^T a_j + 1`.
    pub fn apply_flat(&self, g: &[f64]) -> Vec<f64> {
        let mut out = g.to_vec();
        let mut mid = vec![0.0; self.n_nodes];
        for j in 0..self.dim {
            self.apply_a(j, g, &mut mid);
            self.apply_at_add(j, &mid, &mut out);
        }
        out
    }

    fn flat_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            let col = self.apply_flat(&e);
            e[c] = 0.0;
            for r in 0..n {
                m[(r, c)] = col[r];
            }
        }
        (&m + m.transpose()) * 0.5
    }

    fn to_flat(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.s).map(|(a, b)| a * b).collect()
    }

    fn from_flat(&self, g: &[f64]) -> Vec<f64> {
        g.iter().zip(&self.s).map(|(a, b)| a / b).collect()
    }

    /// `Omega u` in `L2(rho)`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.from_flat(&self.apply_flat(&self.to_flat(u)))
    }

    /// `<u, (Omega - 1) u>`, the discrete `<|grad u|^2>`.
    pub fn gradient_energy(&self, u: &[f64]) -> f64 {
        let g = self.to_flat(u);
        let mut mid = vec![0.0; self.n_nodes];
        let mut total = 0.0;
        for j in 0..self.dim {
            self.apply_a(j, &g, &mut mid);
            total += mid.iter().map(|v| v * v).sum::<f64>();
        }
        total * self.flat_scale
    }

    pub fn is_full(&self) -> bool {
        matches!(self.spectrum, Spectrum::Full { .. })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        match &self.spectrum {
            Spectrum::Full { values, .. } | Spectrum::Partial { values, .. } => values,
        }
    }

    /// Eigenvector `k` as a field normalized in `L2(rho)`.
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        let vecs = match &self.spectrum {
            Spectrum::Full { vectors, .. } | Spectrum::Partial { vectors, .. } => vectors,
        };
        let g: Vec<f64> = vecs.column(k).iter().copied().collect();
        let u = self.from_flat(&g);
        let c = 1.0 / self.flat_scale.sqrt();
        u.iter().map(|v| v * c).collect()
    }

    fn spectral_fn<F: Fn(f64) -> f64>(&self, u: &[f64], f: F) -> Vec<f64> {
        let (values, vectors) = match &self.spectrum {
            Spectrum::Full { values, vectors } | Spectrum::Partial { values, vectors } => (values, vectors),
        };
        let g = DVector::from_vec(self.to_flat(u));
        let coeffs = vectors.transpose() * &g;
        let mut out = DVector::zeros(self.n_nodes);
        for (k, &lam) in values.iter().enumerate() {
            out.axpy(f(lam) * coeffs[k], &vectors.column(k), 1.0);
        }
        if !self.is_full() {
            // Remainder above the computed window, scaled by the last eigenvalue.
            let lam_k = *values.last().unwrap_or(&1.0);
            let rest = &g - vectors * &coeffs;
            out.axpy(f(lam_k), &rest, 1.0);
        }
        self.from_flat(out.as_slice())
    }

    /// `Omega^-1 u`
    pub fn solve(&self, u: &[f64]) -> Vec<f64> {
        if self.is_full() {
            return self.spectral_fn(u, |l| 1.0 / l);
        }
        let b = self.to_flat(u);
        self.from_flat(&self.cg(&b))
    }

    /// `Omega^-1/2 u`. With a partial spectrum the part above the window
    /// is scaled by the largest computed eigenvalue, which overestimates it.
    pub fn inv_sqrt(&self, u: &[f64]) -> Vec<f64> {
        self.spectral_fn(u, |l| 1.0 / l.sqrt())
    }

    fn cg(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bn == 0.0 {
            return x;
        }
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        for _ in 0..(10 * n).max(100) {
            let ap = self.apply_flat(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            if rr_new.sqrt() <= self.cg_tol * bn {
                break;
            }
            let beta = rr_new / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
        x
    }

    /// Lowest eigenpairs by Lanczos on `Omega_flat^-1` with full reorthogonalization.
    fn lanczos_lowest(&self, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = self.n_nodes;
        let m = n.min(2 * k + 60);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= nv);
        let mut basis: Vec<Vec<f64>> = vec![v];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        for j in 0..m {
            let mut w = self.cg(&basis[j]);
            let a: f64 = w.iter().zip(&basis[j]).map(|(x, y)| x * y).sum();
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c: f64 = w.iter().zip(q).map(|(x, y)| x * y).sum();
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if j + 1 == m || b < 1e-14 * a.abs() {
                beta.push(b);
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }
        let steps = alpha.len();
        let t = DMatrix::from_fn(steps, steps, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let b_last = *beta.last().unwrap_or(&0.0);
        // Ritz values of the inverse; largest first means smallest eigenvalue first.
        let mut idx: Vec<usize> = (0..steps).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let mut values = Vec::new();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for &i in idx.iter().take(k) {
            let theta = eig.eigenvalues[i];
            let resid = (b_last * eig.eigenvectors[(steps - 1, i)]).abs();
            if theta <= 0.0 || resid > 1e-9 * theta {
                break;
            }
            let mut y = DVector::zeros(n);
            for (c, q) in basis.iter().take(steps).enumerate() {
                y.axpy(eig.eigenvectors[(c, i)], &DVector::from_column_slice(q), 1.0);
            }
            y /= y.norm();
            values.push(1.0 / theta);
            cols.push(y);
        }
        if values.len() < 2 {
            return Err(Error::EigendecompositionUnavailable("Lanczos did not converge".into()));
        }
        Ok((values, DMatrix::from_columns(&cols)))
    }
}

/// Worst observed ratios of the functional inequalities on random smooth fields.
#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport {
    pub samples: usize,
    /// `min <|grad u|^2> / ||u - <u>||^2`, bounded below by `c_P`.
    pub poincare_min_ratio: f64,
    /// `max ||u - <u>|| / ||Omega^-1/2 grad u||`
    pub lions_lower: f64,
    /// `max ||Omega^-1/2 grad u|| / ||u - <u>||`
    pub lions_upper: f64,
    /// `min ||Omega^-1/2 grad u||^2 / ||u - <u>||^2`, an empirical `c_P1`.
    pub c_p1: f64,
    /// `max ||u|| / ||Omega^-1/2 sym grad u||`; `None` in dimension one.
    pub korn: Option<f64>,
}

fn random_field(grid: &SpatialGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = grid.dim;
    let a: Vec<f64> = (0..6 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let k: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    grid.field(|x| {
        let mut v = 0.0;
        for j in 0..d {
            let y = x[j];
            let c = &a[6 * j..6 * j + 6];
            v += c[0] * y + c[1] * (y * y - 1.0) + c[2] * y * y * y / 3.0 + c[3] * (y * y * y * y - 3.0) / 12.0;
            v += c[4] * (y * x[(j + 1) % d]) + c[5] * (0.7 * y).tanh();
        }
        let kx: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
        v + (kx + ph).sin()
    })
}

/// Samples random smooth fields and reports the functional inequality ratios.
pub fn verify_functional_inequalities(grid: &SpatialGrid, omega: &WittenOperator, samples: usize, seed: u64) -> InequalityReport {
    let d = grid.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = InequalityReport {
        samples,
        poincare_min_ratio: f64::INFINITY,
        lions_lower: 0.0,
        lions_upper: 0.0,
        c_p1: f64::INFINITY,
        korn: if d >= 2 { Some(0.0) } else { None },
    };
    for _ in 0..samples {
        let mut u = random_field(grid, &mut rng);
        let mean = grid.average(&u);
        u.iter_mut().for_each(|v| *v -= mean);
        let var = grid.norm2(&u);
        if var < 1e-20 {
            continue;
        }
        rep.poincare_min_ratio = rep.poincare_min_ratio.min(omega.gradient_energy(&u) / var);
        let mut g2 = 0.0;
        for j in 0..d {
            g2 += grid.norm2(&omega.inv_sqrt(&grid.deriv(j, &u)));
        }
        rep.lions_lower = rep.lions_lower.max((var / g2).sqrt());
        rep.lions_upper = rep.lions_upper.max((g2 / var).sqrt());
        rep.c_p1 = rep.c_p1.min(g2 / var);
        if d >= 2 {
            let mut field: Vec<Vec<f64>> = (0..d).map(|_| random_field(grid, &mut rng)).collect();
            for _ in 0..2 {
                let grads: Vec<Vec<f64>> = (0..d * d).map(|k| grid.deriv(k % d, &field[k / d])).collect();
                let x: Vec<Vec<f64>> = (0..d).map(|j| grid.coordinate(j)).collect();
                for i in 0..d {
                    for j in 0..d {
                        let a = 0.5 * (grid.average(&grads[i * d + j]) - grid.average(&grads[j * d + i]));
                        for (f, xj) in field[i].iter_mut().zip(&x[j]) {
                            *f -= a * xj;
                        }
                    }
                    let m = grid.average(&field[i]);
                    field[i].iter_mut().for_each(|v| *v -= m);
                }
            }
            let grads: Vec<Vec<f64>> = (0..d * d).map(|k| grid.deriv(k % d, &field[k / d])).collect();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..d {
                num += grid.norm2(&field[i]);
                for j in 0..d {
                    let s: Vec<f64> = grads[i * d + j].iter().zip(&grads[j * d + i]).map(|(a, b)| 0.5 * (a + b)).collect();
                    den += grid.norm2(&omega.inv_sqrt(&s));
                }
            }
            if let Some(k) = rep.korn.as_mut() {
                *k = k.max((num / den).sqrt());
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{normalize, NormalizeOptions, RawPotential};

    fn grid(d: usize, n: usize) -> SpatialGrid {
        let pot = normalize(&RawPotential::fully_harmonic(d), NormalizeOptions::default()).unwrap();
        SpatialGrid::new(&pot, n, &pot.half_widths)
    }

    #[test]
    fn constants_are_fixed() {
        let g = grid(1, 101);
        let w = WittenOperator::new(&g, SpectrumRequest::Dense).unwrap();
        let one = vec![1.0; g.len()];
        let a = w.apply(&one);
        assert!(a.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let s = w.solve(&one);
        let err: f64 = g.norm2(&s.iter().map(|v| v - 1.0).collect::<Vec<_>>());
        assert!(err.sqrt() < 1e-9);
    }

    #[test]
    fn linear_is_eigenfunction() {
        let g = grid(1, 201);
        let w = WittenOperator::new(&g, SpectrumRequest::Dense).unwrap();
        let x = g.coordinate(0);
        let ox = w.apply(&x);
        let diff: Vec<f64> = ox.iter().zip(&x).map(|(a, b)| a - 2.0 * b).collect();
        assert!(g.norm2(&diff).sqrt() < 1e-4);
        assert!((w.eigenvalues()[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn partial_matches_dense() {
        let g = grid(2, 20);
        let dense = WittenOperator::new(&g, SpectrumRequest::Dense).unwrap();
        let part = WittenOperator::new(&g, SpectrumRequest::Partial(12)).unwrap();
        for k in 0..6 {
            assert!((dense.eigenvalues()[k] - part.eigenvalues()[k]).abs() < 1e-8);
        }
        let f = g.field(|x| (x[0] - 0.3 * x[1]).sin());
        let a = dense.solve(&f);
        let b = part.solve(&f);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(g.norm2(&diff).sqrt() < 1e-9);
    }
}
