//! Uniform tensor grid on `[-L, L]^d` with `rho`-weighted quadrature and
//! derivative operators along grid lines.
//!
//! Each axis carries a collocated derivative `D = D0 + E`. `D0` is the fourth
//! order central stencil with one-sided fourth order closures. `E` is a rank
//! two correction, built per grid line, that
//!
//! * vanishes on polynomials of degree at most four, so `D` stays exact there;
//! * makes the weighted adjoint `W^-1 D^T W` act exactly as
//!   `u -> -u' + (d_j phi) u` on affine functions of the line coordinate.
//!
//! Transport built from `D` and its weighted adjoint is then skew-adjoint in the
//! discrete `L2(rho)` product to rounding error, and low-degree polynomial
//! states (the special modes) are transported without truncation error.

use nalgebra::{DMatrix, DVector};

use crate::potential::Potential;

const INTERIOR: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const POLY_DEG: usize = 4;
const ADJ_DEG: usize = 1;

/// Five-point weights for the first derivative at offset 0 from nodes `offsets`.
fn one_sided(offsets: [f64; 5]) -> [f64; 5] {
    let mut a = DMatrix::zeros(5, 5);
    for k in 0..5 {
        for (c, o) in offsets.iter().enumerate() {
            a[(k, c)] = o.powi(k as i32);
        }
    }
    let mut b = DVector::zeros(5);
    b[1] = 1.0;
    let sol = a.lu().solve(&b).expect("Vandermonde system is regular");
    [sol[0], sol[1], sol[2], sol[3], sol[4]]
}

/// Rows of the unscaled `D0` on `n` points: (first column, five weights).
pub fn stencil_rows(n: usize) -> Vec<(usize, [f64; 5])> {
    assert!(n >= 5, "need at least five points per axis");
    let mut rows = Vec::with_capacity(n);
    rows.push((0, one_sided([0.0, 1.0, 2.0, 3.0, 4.0])));
    rows.push((0, one_sided([-1.0, 0.0, 1.0, 2.0, 3.0])));
    for i in 2..n - 2 {
        rows.push((i - 2, INTERIOR));
    }
    rows.push((n - 5, one_sided([-3.0, -2.0, -1.0, 0.0, 1.0])));
    rows.push((n - 5, one_sided([-4.0, -3.0, -2.0, -1.0, 0.0])));
    rows
}

/// Per-line data of the corrected derivative.
#[derive(Clone, Debug)]
struct LineCorrection {
    /// `U`, `G`, `K`, `V` as two stacked columns of length `n`.
    u: Vec<f64>,
    g: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `D0[j][c] * w_j / w_c` for every stencil entry, row-major like the stencil.
    adj: Vec<f64>,
}

/// Derivative along one axis, for every grid line of that axis.
#[derive(Clone, Debug)]
pub struct AxisOperator {
    pub axis: usize,
    pub n: usize,
    pub stride: usize,
    pub line_starts: Vec<usize>,
    inv_dx: f64,
    rows: Vec<(usize, [f64; 5])>,
    lines: Vec<LineCorrection>,
}

impl AxisOperator {
    fn build(axis: usize, n: usize, dim: usize, x1d: &[f64], log_w: &[f64], force: &[f64]) -> Self {
        let stride = n.pow(axis as u32);
        let total = n.pow(dim as u32);
        let line_starts: Vec<usize> = (0..total).filter(|&i| (i / stride) % n == 0).collect();
        let dx = x1d[1] - x1d[0];
        let inv_dx = 1.0 / dx;
        let rows = stencil_rows(n);
        let l = x1d[n - 1];
        let lines = line_starts
            .iter()
            .map(|&start| {
                let lw: Vec<f64> = (0..n).map(|i| log_w[start + i * stride]).collect();
                let f: Vec<f64> = (0..n).map(|i| force[start + i * stride]).collect();
                build_line(&rows, inv_dx, x1d, l, &lw, &f)
            })
            .collect();
        AxisOperator { axis, n, stride, line_starts, inv_dx, rows, lines }
    }

    /// `out += coef * D u`.
    pub fn apply_add(&self, u: &[f64], out: &mut [f64], coef: f64) {
        let n = self.n;
        let s = self.stride;
        for (li, &start) in self.line_starts.iter().enumerate() {
            let lc = &self.lines[li];
            let mut p0 = 0.0;
            let mut p1 = 0.0;
            for i in 0..n {
                let ui = u[start + i * s];
                p0 += lc.g[i] * ui;
                p1 += lc.g[n + i] * ui;
            }
            let c = coef * self.inv_dx;
            for (i, (c0, w)) in self.rows.iter().enumerate() {
                let b = start + c0 * s;
                let acc = w[0] * u[b] + w[1] * u[b + s] + w[2] * u[b + 2 * s] + w[3] * u[b + 3 * s] + w[4] * u[b + 4 * s];
                out[start + i * s] += c * acc + coef * (lc.u[i] * p0 + lc.u[n + i] * p1);
            }
        }
    }

    /// `out += coef * D* u` with `D* = W^-1 D^T W`, the discrete `-d/dx + d phi`.
    pub fn apply_adjoint_add(&self, u: &[f64], out: &mut [f64], coef: f64) {
        let n = self.n;
        let s = self.stride;
        let c = coef * self.inv_dx;
        for (li, &start) in self.line_starts.iter().enumerate() {
            let lc = &self.lines[li];
            let mut p0 = 0.0;
            let mut p1 = 0.0;
            for i in 0..n {
                let ui = u[start + i * s];
                p0 += lc.v[i] * ui;
                p1 += lc.v[n + i] * ui;
            }
            for i in 0..n {
                out[start + i * s] += coef * (lc.k[i] * p0 + lc.k[n + i] * p1);
            }
            for (j, (c0, _)) in self.rows.iter().enumerate() {
                let uj = c * u[start + j * s];
                let a = &lc.adj[5 * j..5 * j + 5];
                let b = start + c0 * s;
                out[b] += a[0] * uj;
                out[b + s] += a[1] * uj;
                out[b + 2 * s] += a[2] * uj;
                out[b + 3 * s] += a[3] * uj;
                out[b + 4 * s] += a[4] * uj;
            }
        }
    }
}

fn build_line(rows: &[(usize, [f64; 5])], inv_dx: f64, x: &[f64], l: f64, lw: &[f64], f: &[f64]) -> LineCorrection {
    let n = x.len();
    let lmax = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|v| (v - lmax).exp()).collect();
    let mut adj = vec![0.0; 5 * n];
    for (j, (c0, wts)) in rows.iter().enumerate() {
        for t in 0..5 {
            adj[5 * j + t] = wts[t] * (lw[j] - lw[c0 + t]).exp();
        }
    }
    let dstar0 = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (j, (c0, _)) in rows.iter().enumerate() {
            for t in 0..5 {
                out[c0 + t] += adj[5 * j + t] * inv_dx * u[j];
            }
        }
        out
    };
    let xs: Vec<f64> = x.iter().map(|v| v / l).collect();
    // Residual of the adjoint identity on 1 and x: (f p - p') - D0* p.
    let mut rw = DMatrix::zeros(n, ADJ_DEG + 1);
    for k in 0..=ADJ_DEG {
        let p: Vec<f64> = xs.iter().map(|v| v.powi(k as i32)).collect();
        let dp = dstar0(&p);
        for i in 0..n {
            let deriv = if k == 0 { 0.0 } else { k as f64 * xs[i].powi(k as i32 - 1) / l };
            rw[(i, k)] = f[i] * p[i] - deriv - dp[i];
        }
    }
    // Remove the part of the residual that would spoil exactness on degree four.
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut qs = DMatrix::zeros(n, POLY_DEG + 1);
    let mut rs = DMatrix::zeros(n, ADJ_DEG + 1);
    for i in 0..n {
        for k in 0..=POLY_DEG {
            qs[(i, k)] = sw[i] * xs[i].powi(k as i32);
        }
        for k in 0..=ADJ_DEG {
            rs[(i, k)] = sw[i] * rw[(i, k)];
        }
    }
    let qr = qs.clone().qr();
    let qmat = qr.q();
    let proj = &qmat * (qmat.transpose() * &rs);
    let mut rt = rw.clone();
    for i in 0..n {
        if sw[i] > 0.0 {
            for k in 0..=ADJ_DEG {
                rt[(i, k)] -= proj[(i, k)] / sw[i];
            }
        }
    }
    // Thin QR of Y = W P.
    let mut y = DMatrix::zeros(n, ADJ_DEG + 1);
    for i in 0..n {
        for k in 0..=ADJ_DEG {
            y[(i, k)] = w[i] * xs[i].powi(k as i32);
        }
    }
    let qr = y.qr();
    let umat = qr.q();
    let tmat = qr.r();
    let tinv = tmat.try_inverse().expect("weighted line basis has full rank");
    let kmat = &rt * tinv;
    let mut u = vec![0.0; 2 * n];
    let mut g = vec![0.0; 2 * n];
    let mut k = vec![0.0; 2 * n];
    let mut v = vec![0.0; 2 * n];
    for c in 0..2 {
        for i in 0..n {
            u[c * n + i] = umat[(i, c)];
            k[c * n + i] = kmat[(i, c)];
            g[c * n + i] = w[i] * kmat[(i, c)];
            v[c * n + i] = w[i] * umat[(i, c)];
        }
    }
    LineCorrection { u, g, k, v, adj }
}

/// Spatial grid with `rho`-weighted quadrature and derivative operators.
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    pub dim: usize,
    pub n: usize,
    /// Half-width of the box along each axis.
    pub half_widths: Vec<f64>,
    /// Node spacing along each axis.
    pub dxs: Vec<f64>,
    /// Smallest spacing.
    pub dx: f64,
    /// Node coordinates along each axis.
    pub x1d: Vec<Vec<f64>>,
    /// `phi` at every node (axis 0 varies fastest).
    pub phi: Vec<f64>,
    /// `d_j phi` at every node, one field per axis.
    pub grad_phi: Vec<Vec<f64>>,
    /// `log w_i` with `w_i = rho(x_i) dx^d`.
    pub log_w: Vec<f64>,
    pub w: Vec<f64>,
    pub ops: Vec<AxisOperator>,
}

impl SpatialGrid {
    /// Grid on `prod_j [-L_j, L_j]` with `n` nodes per axis.
    pub fn new(pot: &Potential, n: usize, half_widths: &[f64]) -> Self {
        let d = pot.dim;
        assert_eq!(half_widths.len(), d, "one half-width per axis");
        let dxs: Vec<f64> = half_widths.iter().map(|l| 2.0 * l / (n - 1) as f64).collect();
        let x1d: Vec<Vec<f64>> = half_widths
            .iter()
            .zip(&dxs)
            .map(|(l, h)| (0..n).map(|i| -l + i as f64 * h).collect())
            .collect();
        let total = n.pow(d as u32);
        let mut phi = vec![0.0; total];
        let mut grad_phi = vec![vec![0.0; total]; d];
        let mut g = vec![0.0; d];
        let mut x = vec![0.0; d];
        for idx in 0..total {
            coords(idx, n, &x1d, &mut x);
            phi[idx] = pot.phi(&x);
            pot.grad(&x, &mut g);
            for j in 0..d {
                grad_phi[j][idx] = g[j];
            }
        }
        let ldx: f64 = dxs.iter().map(|h| h.ln()).sum();
        let log_w: Vec<f64> = phi.iter().map(|p| -p + ldx).collect();
        let w: Vec<f64> = log_w.iter().map(|v| v.exp()).collect();
        let ops = (0..d)
            .map(|j| AxisOperator::build(j, n, d, &x1d[j], &log_w, &grad_phi[j]))
            .collect();
        let dx = dxs.iter().cloned().fold(f64::INFINITY, f64::min);
        SpatialGrid { dim: d, n, half_widths: half_widths.to_vec(), dxs, dx, x1d, phi, grad_phi, log_w, w, ops }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn coords(&self, idx: usize, out: &mut [f64]) {
        coords(idx, self.n, &self.x1d, out);
    }

    /// Field of the coordinate `x_axis`.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        let stride = self.n.pow(axis as u32);
        (0..self.len()).map(|i| self.x1d[axis][(i / stride) % self.n]).collect()
    }

    /// `sum_i w_i f_i`
    pub fn average(&self, f: &[f64]) -> f64 {
        self.w.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
    }

    pub fn norm2(&self, a: &[f64]) -> f64 {
        self.inner(a, a)
    }

    /// `D_axis u`
    pub fn deriv(&self, axis: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.ops[axis].apply_add(u, &mut out, 1.0);
        out
    }

    /// `D*_axis u`, the weighted adjoint of `D_axis`.
    pub fn deriv_star(&self, axis: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.ops[axis].apply_adjoint_add(u, &mut out, 1.0);
        out
    }

    /// Discrete Laplacian `sum_j D_j D_j`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for j in 0..self.dim {
            let du = self.deriv(j, u);
            self.ops[j].apply_add(&du, &mut out, 1.0);
        }
        out
    }

    /// Weighted error of `D*_axis` against `-d_axis + d_axis phi` on a smooth
    /// non-polynomial field, relative to the weighted norm of the exact result.
    pub fn adjoint_consistency(&self, axis: usize) -> f64 {
        let d = self.dim;
        let u = self.field(|x| phase(x, axis, d).sin());
        let du = self.field(|x| 1.3 * phase(x, axis, d).cos());
        let exact: Vec<f64> = (0..self.len()).map(|i| -du[i] + self.grad_phi[axis][i] * u[i]).collect();
        let approx = self.deriv_star(axis, &u);
        let err: Vec<f64> = approx.iter().zip(&exact).map(|(a, b)| a - b).collect();
        (self.norm2(&err) / self.norm2(&exact)).sqrt()
    }

    /// Node field from a function of position.
    pub fn field<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        (0..self.len())
            .map(|i| {
                self.coords(i, &mut x);
                f(&x)
            })
            .collect()
    }
}

/// `1.3 x_axis + 0.2 + 0.4 sum of the other coordinates`
fn phase(x: &[f64], axis: usize, d: usize) -> f64 {
    let rest: f64 = (0..d).filter(|&j| j != axis).map(|j| x[j]).sum();
    1.3 * x[axis] + 0.2 + 0.4 * rest
}

fn coords(idx: usize, n: usize, x1d: &[Vec<f64>], out: &mut [f64]) {
    let mut rem = idx;
    for (o, xs) in out.iter_mut().zip(x1d) {
        *o = xs[rem % n];
        rem /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{normalize, Family, NormalizeOptions, RawPotential};

    fn order(pot: &Potential, n: usize) -> (f64, f64, f64) {
        let l = pot.half_widths.clone();
        let a = SpatialGrid::new(pot, n, &l).adjoint_consistency(0);
        let b = SpatialGrid::new(pot, 2 * n - 1, &l).adjoint_consistency(0);
        (a, b, (a / b).log2())
    }

    #[test]
    fn adjoint_is_fourth_order() {
        let pot = normalize(&RawPotential::fully_harmonic(1), NormalizeOptions::default()).unwrap();
        let (a, b, p) = order(&pot, 64);
        println!("harmonic {a:e} {b:e} {p}");
        assert!(p > 3.5, "order {p}");
        let raw = RawPotential::new(1, Family::PowerLaw { gamma: 4.0, a: 1.0, z: 0.0 }).unwrap();
        let pot = normalize(&raw, NormalizeOptions::default()).unwrap();
        let (a, b, p) = order(&pot, 64);
        println!("quartic {a:e} {b:e} {p}");
        assert!(p > 3.5, "order {p}");
    }
}
