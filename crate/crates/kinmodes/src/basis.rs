//! Phase-space discretization and kinetic states.
//!
//! A state stores `h = f / M` as Hermite coefficients at every spatial node,
//! mode-major: coefficient `k` of node `i` sits at `data[k * n_nodes + i]`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::hermite::VelocityBasis;
use crate::potential::Potential;

pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Discretization {
    pub pot: Arc<Potential>,
    pub grid: SpatialGrid,
    pub vel: VelocityBasis,
    pub quad_tol: f64,
}

/// Macroscopic fields of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFields {
    pub r: Vec<f64>,
    pub m: Vec<Vec<f64>>,
    pub e: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KineticState {
    pub data: Vec<f64>,
    pub n_nodes: usize,
    pub n_modes: usize,
    pub t: f64,
}

impl KineticState {
    pub fn zeros(n_nodes: usize, n_modes: usize) -> Self {
        KineticState { data: vec![0.0; n_nodes * n_modes], n_nodes, n_modes, t: 0.0 }
    }

    pub fn slot(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn slot_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn same_shape(&self, other: &KineticState) -> bool {
        self.n_nodes == other.n_nodes && self.n_modes == other.n_modes
    }

    fn check_shape(&self, other: &KineticState) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{} against {}x{}",
                self.n_nodes, self.n_modes, other.n_nodes, other.n_modes
            )))
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &KineticState) -> Result<()> {
        self.check_shape(other)?;
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &KineticState) -> Result<KineticState> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }
}

/// Bound on `max |grad phi| dx` above which the weight ratio between
/// neighbouring nodes makes the weighted adjoint derivative stiff.
pub const MAX_GRAD_DX: f64 = 4.0;

/// `max_j max |d_j phi| dx_j` over the boundary of the grid box.
pub fn boundary_stiffness(pot: &Potential, widths: &[f64], n: usize) -> f64 {
    let d = pot.dim;
    let mut worst = vec![0.0f64; d];
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let total = n.pow(d as u32 - 1);
    for face in 0..d {
        for side in [-widths[face], widths[face]] {
            for idx in 0..total {
                let mut rest = idx;
                for j in 0..d {
                    if j == face {
                        x[j] = side;
                        continue;
                    }
                    x[j] = -widths[j] + 2.0 * widths[j] * (rest % n) as f64 / (n - 1) as f64;
                    rest /= n;
                }
                pot.grad(&x, &mut g);
                for j in 0..d {
                    worst[j] = worst[j].max(g[j].abs());
                }
            }
        }
    }
    (0..d).map(|j| worst[j] * 2.0 * widths[j] / (n - 1) as f64).fold(0.0, f64::max)
}

impl Discretization {
    /// Grid of `n_x` nodes per axis on `[-L, L]^d`. Without `L` each axis
    /// gets the potential's own truncation half-width.
    pub fn new(pot: Arc<Potential>, n_x: usize, half_width: Option<f64>, order: usize) -> Result<Self> {
        if n_x < 8 {
            return Err(Error::Config(format!("need at least 8 nodes per axis (got {n_x})")));
        }
        let vel = VelocityBasis::new(pot.dim, order)?;
        let widths = match half_width {
            Some(l) if !(l > 0.0) => return Err(Error::Config(format!("half-width must be positive (got {l})"))),
            Some(l) => vec![l; pot.dim],
            None => pot.half_widths.clone(),
        };
        let grid = SpatialGrid::new(&pot, n_x, &widths);
        Ok(Discretization { quad_tol: pot.quad_tol, pot, grid, vel })
    }

    /// `max |grad phi| dx` on the boundary; above `MAX_GRAD_DX` transport is stiff.
    pub fn stiffness(&self) -> f64 {
        boundary_stiffness(&self.pot, &self.grid.half_widths, self.grid.n)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn n_modes(&self) -> usize {
        self.vel.len()
    }

    pub fn zeros(&self) -> KineticState {
        KineticState::zeros(self.n_nodes(), self.n_modes())
    }

    fn check(&self, h: &KineticState) -> Result<()> {
        if h.n_nodes != self.n_nodes() || h.n_modes != self.n_modes() {
            return Err(Error::ShapeMismatch(format!(
                "state is {}x{}, discretization is {}x{}",
                h.n_nodes,
                h.n_modes,
                self.n_nodes(),
                self.n_modes()
            )));
        }
        Ok(())
    }

    /// `sum_x w_x sum_k a_k b_k`
    pub fn inner(&self, a: &KineticState, b: &KineticState) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok((0..a.n_modes).map(|k| self.grid.inner(a.slot(k), b.slot(k))).sum())
    }

    pub fn norm(&self, h: &KineticState) -> f64 {
        (0..h.n_modes).map(|k| self.grid.norm2(h.slot(k))).sum::<f64>().sqrt()
    }

    /// Norm of the microscopic part.
    pub fn norm_perp(&self, h: &KineticState) -> f64 {
        (self.vel.micro_start()..h.n_modes).map(|k| self.grid.norm2(h.slot(k))).sum::<f64>().sqrt()
    }

    /// Spatial `L2(rho)` norm.
    pub fn field_norm(&self, u: &[f64]) -> f64 {
        self.grid.norm2(u).sqrt()
    }

    pub fn avg(&self, u: &[f64]) -> f64 {
        self.grid.average(u)
    }

    pub fn macro_fields(&self, h: &KineticState) -> MacroFields {
        let d = self.dim();
        MacroFields {
            r: h.slot(0).to_vec(),
            m: (0..d).map(|j| h.slot(1 + j).to_vec()).collect(),
            e: h.slot(self.vel.energy_slot()).to_vec(),
        }
    }

    /// State `r + m . v + e E(v)`.
    pub fn from_macro(&self, r: &[f64], m: &[Vec<f64>], e: &[f64]) -> KineticState {
        let mut h = self.zeros();
        h.slot_mut(0).copy_from_slice(r);
        for (j, mj) in m.iter().enumerate() {
            h.slot_mut(1 + j).copy_from_slice(mj);
        }
        h.slot_mut(self.vel.energy_slot()).copy_from_slice(e);
        h
    }

    /// `x_axis` at every node.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.grid.coordinate(axis)
    }

    /// `|x|^2 - <|x|^2>`
    pub fn xi2(&self) -> Vec<f64> {
        let r2 = self.grid.field(|x| x.iter().map(|v| v * v).sum());
        let mean = self.avg(&r2);
        r2.iter().map(|v| v - mean).collect()
    }

    /// `phi - <phi>`
    pub fn xi_phi(&self) -> Vec<f64> {
        let mean = self.avg(&self.grid.phi);
        self.grid.phi.iter().map(|v| v - mean).collect()
    }

    /// `xi_phi - <Lap phi>/(2d) xi2`
    pub fn phi_s(&self) -> Vec<f64> {
        let d = self.dim() as f64;
        let lap = self.grid.field(|x| self.pot.laplacian(x));
        let c = self.avg(&lap) / (2.0 * d);
        self.xi_phi().iter().zip(self.xi2()).map(|(a, b)| a - c * b).collect()
    }

    /// Hamiltonian `H = (|v|^2 - d)/2 + phi - <phi>`.
    pub fn hamiltonian(&self) -> KineticState {
        let d = self.dim();
        let e = vec![(d as f64 / 2.0).sqrt(); self.n_nodes()];
        self.from_macro(&self.xi_phi(), &vec![vec![0.0; self.n_nodes()]; d], &e)
    }

    /// Projects `f(x, v)` on the velocity basis at every node.
    pub fn project<F: Fn(&[f64], &[f64]) -> f64>(&self, f: F) -> KineticState {
        let (pts, wts) = self.vel.quadrature();
        let table: Vec<Vec<f64>> = pts.iter().map(|p| self.vel.eval(p)).collect();
        let mut h = self.zeros();
        let n = self.n_nodes();
        let mut x = vec![0.0; self.dim()];
        for i in 0..n {
            self.grid.coords(i, &mut x);
            for (q, p) in pts.iter().enumerate() {
                let fw = wts[q] * f(&x, p);
                if fw == 0.0 {
                    continue;
                }
                for (k, b) in table[q].iter().enumerate() {
                    h.data[k * n + i] += fw * b;
                }
            }
        }
        h
    }

    /// Matrix moment `E[h] = int (v v^T - I) h mu dv`, row-major `d*d` fields.
    pub fn moment_e(&self, h: &KineticState) -> Vec<Vec<f64>> {
        let d = self.dim();
        let n = self.n_nodes();
        let diag = self.diagonal_tensor(h);
        let mut out = vec![vec![0.0; n]; d * d];
        for i in 0..d {
            for a in 0..n {
                out[i * d + i][a] = 2f64.sqrt() * diag[i][a];
            }
            for j in (i + 1)..d {
                let mut k = vec![0; d];
                k[i] = 1;
                k[j] = 1;
                let s = self.vel.slot(&k).expect("degree two slot");
                out[i * d + j].copy_from_slice(h.slot(s));
                out[j * d + i].copy_from_slice(h.slot(s));
            }
        }
        out
    }

    /// Vector moment `Theta[h] = int v (E(v) - sqrt(2/d)) h mu dv`.
    pub fn moment_theta(&self, h: &KineticState) -> Vec<Vec<f64>> {
        let d = self.dim();
        let df = d as f64;
        let n = self.n_nodes();
        let mut out = vec![vec![0.0; n]; d];
        for i in 0..d {
            let mut k = vec![0; d];
            k[i] = 3;
            let s3 = self.vel.slot(&k).expect("degree three slot");
            let c3 = (3.0 / df).sqrt();
            for a in 0..n {
                out[i][a] = c3 * h.data[s3 * n + a];
            }
            for l in 0..d {
                if l == i {
                    continue;
                }
                let mut k = vec![0; d];
                k[i] = 1;
                k[l] = 2;
                let s = self.vel.slot(&k).expect("degree three slot");
                for a in 0..n {
                    out[i][a] += h.data[s * n + a] / df.sqrt();
                }
            }
        }
        out
    }

    /// Coefficients of `psi_{2 e_j}` recovered from the rotated block.
    pub fn diagonal_tensor(&self, h: &KineticState) -> Vec<Vec<f64>> {
        let d = self.dim();
        let n = self.n_nodes();
        let mut out = vec![vec![0.0; n]; d];
        let mut rot = vec![0.0; d];
        let mut ten = vec![0.0; d];
        for a in 0..n {
            for b in 0..d {
                rot[b] = h.data[(d + 1 + b) * n + a];
            }
            self.vel.rotated_to_tensor(&rot, &mut ten);
            for j in 0..d {
                out[j][a] = ten[j];
            }
        }
        out
    }
}
