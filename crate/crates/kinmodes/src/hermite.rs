//! Orthonormal probabilists' Hermite basis in velocity.
//!
//! The basis keeps the tensor structure `psi_k(v) = prod_j He_{k_j}(v_j)/sqrt(k_j!)`
//! except on the diagonal of degree two, where the `d` elements `psi_{2 e_j}`
//! are rotated so that the first of them is `E(v) = (|v|^2 - d)/sqrt(2d)`.
//! The first `d + 2` elements are therefore `1, v_1, .., v_d, E`.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Gauss rule for the standard normal weight, `n` points, weights summing to one.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Symmetrize to remove eigensolver asymmetry.
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let k = n - 1 - i;
        nodes[i] = 0.5 * (pairs[i].0 - pairs[k].0);
        weights[i] = 0.5 * (pairs[i].1 + pairs[k].1);
    }
    (nodes, weights)
}

/// Values `psi_0(v) .. psi_n(v)` of the orthonormal Hermite polynomials.
pub fn hermite_orthonormal(n: usize, v: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    out[0] = 1.0;
    if n >= 1 {
        out[1] = v;
    }
    for k in 1..n {
        out[k + 1] = (v * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
    }
    out
}

/// Largest node of the `n`-point rule, used as the velocity bound for CFL.
pub fn max_node(n: usize) -> f64 {
    let (nodes, _) = gauss_hermite(n);
    nodes.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Neighbour of a tensor slot along one axis with its recurrence coefficient.
#[derive(Clone, Copy, Debug)]
pub struct Neighbor {
    pub slot: usize,
    pub coef: f64,
}

#[derive(Clone, Debug)]
pub struct VelocityBasis {
    pub dim: usize,
    pub order: usize,
    /// Multi-index of each tensor slot. Slot `d + 1 + j` holds `2 e_j`.
    pub multi: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    /// Row `b` gives basis element `d + 1 + b` as a combination of `psi_{2 e_j}`.
    pub diag_rotation: DMatrix<f64>,
    /// `lower[s][j]` is the slot of `k - e_j` with coefficient `sqrt(k_j)`.
    pub lower: Vec<Vec<Option<Neighbor>>>,
    /// `upper[s][j]` is the slot of `k + e_j` with coefficient `sqrt(k_j + 1)`.
    pub upper: Vec<Vec<Option<Neighbor>>>,
    pub gh_nodes: Vec<f64>,
    pub gh_weights: Vec<f64>,
}

fn multi_indices_of_degree(d: usize, n: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in (0..=n).rev() {
        for mut rest in multi_indices_of_degree(d - 1, n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Helmert matrix: first row uniform, remaining rows orthonormal contrasts.
fn helmert(d: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        h[(0, j)] = 1.0 / (d as f64).sqrt();
    }
    for b in 1..d {
        let norm = ((b * (b + 1)) as f64).sqrt();
        for j in 0..b {
            h[(b, j)] = 1.0 / norm;
        }
        h[(b, b)] = -(b as f64) / norm;
    }
    h
}

impl VelocityBasis {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order < 4 {
            return Err(Error::Config(format!(
                "velocity order must be at least 4 to hold E[h_perp] and Theta[h] (got {order})"
            )));
        }
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        let mut multi: Vec<Vec<usize>> = Vec::new();
        multi.push(vec![0; dim]);
        for j in 0..dim {
            let mut k = vec![0; dim];
            k[j] = 1;
            multi.push(k);
        }
        for j in 0..dim {
            let mut k = vec![0; dim];
            k[j] = 2;
            multi.push(k);
        }
        for k in multi_indices_of_degree(dim, 2) {
            if k.iter().all(|&c| c < 2) {
                multi.push(k);
            }
        }
        for n in 3..=order {
            multi.extend(multi_indices_of_degree(dim, n));
        }
        let index: HashMap<Vec<usize>, usize> = multi.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        let mut lower = Vec::with_capacity(multi.len());
        let mut upper = Vec::with_capacity(multi.len());
        for k in &multi {
            let mut lo = Vec::with_capacity(dim);
            let mut up = Vec::with_capacity(dim);
            for j in 0..dim {
                if k[j] > 0 {
                    let mut km = k.clone();
                    km[j] -= 1;
                    lo.push(Some(Neighbor { slot: index[&km], coef: (k[j] as f64).sqrt() }));
                } else {
                    lo.push(None);
                }
                let mut kp = k.clone();
                kp[j] += 1;
                up.push(index.get(&kp).map(|&s| Neighbor { slot: s, coef: ((k[j] + 1) as f64).sqrt() }));
            }
            lower.push(lo);
            upper.push(up);
        }
        let (gh_nodes, gh_weights) = gauss_hermite(order + 3);
        Ok(VelocityBasis {
            dim,
            order,
            multi,
            index,
            diag_rotation: helmert(dim),
            lower,
            upper,
            gh_nodes,
            gh_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    /// Slot of a tensor multi-index (the diagonal of degree two refers to tensor slots).
    pub fn slot(&self, k: &[usize]) -> Option<usize> {
        self.index.get(k).copied()
    }

    pub fn degree(&self, slot: usize) -> usize {
        self.multi[slot].iter().sum()
    }

    /// Slot of `E(v)`.
    pub fn energy_slot(&self) -> usize {
        self.dim + 1
    }

    /// First slot outside the collision invariants.
    pub fn micro_start(&self) -> usize {
        self.dim + 2
    }

    pub fn is_rotated(&self, slot: usize) -> bool {
        slot > self.dim && slot <= 2 * self.dim
    }

    /// Converts the rotated diagonal block into tensor coefficients (`coef[j]` of `psi_{2e_j}`).
    pub fn rotated_to_tensor(&self, rotated: &[f64], tensor: &mut [f64]) {
        let d = self.dim;
        for j in 0..d {
            tensor[j] = (0..d).map(|b| self.diag_rotation[(b, j)] * rotated[b]).sum();
        }
    }

    pub fn tensor_to_rotated(&self, tensor: &[f64], rotated: &mut [f64]) {
        let d = self.dim;
        for b in 0..d {
            rotated[b] = (0..d).map(|j| self.diag_rotation[(b, j)] * tensor[j]).sum();
        }
    }

    /// Evaluates every basis element at velocity `v`.
    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let per_axis: Vec<Vec<f64>> = v.iter().map(|&vj| hermite_orthonormal(self.order, vj)).collect();
        let mut out: Vec<f64> = self
            .multi
            .iter()
            .map(|k| (0..d).map(|j| per_axis[j][k[j]]).product())
            .collect();
        let tensor: Vec<f64> = out[d + 1..=2 * d].to_vec();
        let mut rot = vec![0.0; d];
        self.tensor_to_rotated(&tensor, &mut rot);
        out[d + 1..=2 * d].copy_from_slice(&rot);
        out
    }

    /// Tensor Gauss rule in `d` dimensions: (points, weights).
    pub fn quadrature(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.gh_nodes.len();
        let total = n.pow(self.dim as u32);
        let mut pts = Vec::with_capacity(total);
        let mut wts = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut p = vec![0.0; self.dim];
            let mut w = 1.0;
            for pj in p.iter_mut() {
                let i = rem % n;
                rem /= n;
                *pj = self.gh_nodes[i];
                w *= self.gh_weights[i];
            }
            pts.push(p);
            wts.push(w);
        }
        (pts, wts)
    }

    /// Gram matrix of the basis under the Gauss rule.
    pub fn gram(&self) -> DMatrix<f64> {
        let (pts, wts) = self.quadrature();
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for (p, w) in pts.iter().zip(&wts) {
            let vals = self.eval(p);
            for a in 0..n {
                for b in 0..n {
                    g[(a, b)] += w * vals[a] * vals[b];
                }
            }
        }
        g
    }

    /// Coefficients of a velocity function in this basis, by Gauss quadrature.
    pub fn project<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let (pts, wts) = self.quadrature();
        let mut out = vec![0.0; self.len()];
        for (p, w) in pts.iter().zip(&wts) {
            let fv = f(p);
            for (o, b) in out.iter_mut().zip(self.eval(p)) {
                *o += w * fv * b;
            }
        }
        out
    }
}
