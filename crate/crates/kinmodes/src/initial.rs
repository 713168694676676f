//! Named initial data.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::{Discretization, KineticState};
use crate::error::{Error, Result};
use crate::hermite::hermite_orthonormal;
use crate::modes::generators;
use crate::potential::SymmetryStructure;

/// Highest degree, in `x` and in `v` separately, of the random perturbation.
pub const RANDOM_DEGREE: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialDatum {
    /// `r0(x) (1 + u . v + theta E(v))` with an off-center bump `r0`.
    MaxwellianPerturbation,
    /// A generator of the special modes, by name (`maxwellian`, `energy`,
    /// `rotation_1`, `directional+_1`, `pulsating-`, ...).
    Mode(String),
    /// `psi_k(v)`, constant in `x`.
    HermiteMode(Vec<usize>),
    /// Random Hermite coefficients of degree at most four in `x` and in `v`.
    RandomSeeded(Option<u64>),
}

impl FromStr for InitialDatum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "maxwellian-perturbation" {
            return Ok(InitialDatum::MaxwellianPerturbation);
        }
        if let Some(name) = s.strip_prefix("mode:") {
            return Ok(InitialDatum::Mode(name.trim().to_string()));
        }
        if let Some(rest) = s.strip_prefix("hermite-mode:") {
            let inner = rest.trim().trim_start_matches('(').trim_end_matches(')');
            let k = inner
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("bad multi-index in '{s}': {e}")))?;
            return Ok(InitialDatum::HermiteMode(k));
        }
        if s == "random-seeded" {
            return Ok(InitialDatum::RandomSeeded(None));
        }
        if let Some(seed) = s.strip_prefix("random-seeded:") {
            let seed = seed.trim().parse().map_err(|e| Error::Config(format!("bad seed in '{s}': {e}")))?;
            return Ok(InitialDatum::RandomSeeded(Some(seed)));
        }
        Err(Error::Config(format!("unknown initial datum '{s}'")))
    }
}

impl std::fmt::Display for InitialDatum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialDatum::MaxwellianPerturbation => write!(f, "maxwellian-perturbation"),
            InitialDatum::Mode(n) => write!(f, "mode:{n}"),
            InitialDatum::HermiteMode(k) => {
                let parts: Vec<String> = k.iter().map(|v| v.to_string()).collect();
                write!(f, "hermite-mode:({})", parts.join(","))
            }
            InitialDatum::RandomSeeded(None) => write!(f, "random-seeded"),
            InitialDatum::RandomSeeded(Some(s)) => write!(f, "random-seeded:{s}"),
        }
    }
}

impl InitialDatum {
    /// Builds the datum; `seed` is used when the datum carries none.
    pub fn build(&self, disc: &Discretization, sym: &SymmetryStructure, seed: u64) -> Result<KineticState> {
        let d = disc.dim();
        match self {
            InitialDatum::MaxwellianPerturbation => Ok(disc.project(|x, v| {
                let shift: f64 = x.iter().enumerate().map(|(j, y)| (y - 0.5 / (j + 1) as f64).powi(2)).sum();
                let r0 = (-0.5 * shift).exp();
                let v2: f64 = v.iter().map(|a| a * a).sum();
                r0 * (1.0 + 0.3 * v[0] + 0.2 * (v2 - d as f64) / (2.0 * d as f64).sqrt())
            })),
            InitialDatum::Mode(name) => {
                let gens = generators(disc, sym)?;
                match gens.names.iter().position(|n| n == name) {
                    Some(k) => Ok(gens.states[k].clone()),
                    None => Err(Error::ClassificationError(format!(
                        "the potential admits no special mode '{name}' (available: {})",
                        gens.names.join(", ")
                    ))),
                }
            }
            InitialDatum::HermiteMode(k) => {
                if k.len() != d {
                    return Err(Error::Config(format!("hermite-mode needs {d} indices, got {}", k.len())));
                }
                let deg: usize = k.iter().sum();
                if deg > disc.vel.order {
                    return Err(Error::Config(format!("hermite-mode of degree {deg} exceeds N_v = {}", disc.vel.order)));
                }
                Ok(disc.project(|_, v| k.iter().zip(v).map(|(&kj, &vj)| hermite_orthonormal(kj, vj)[kj]).product()))
            }
            InitialDatum::RandomSeeded(own) => Ok(random_perturbation(disc, own.unwrap_or(seed))),
        }
    }
}

/// All multi-indices of length `d` and total degree at most `deg`.
fn multi_indices(d: usize, deg: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for k in &out {
            let used: usize = k.iter().sum();
            for a in 0..=(deg - used) {
                let mut kk = k.clone();
                kk.push(a);
                next.push(kk);
            }
        }
        out = next;
    }
    out
}

/// `sum c_{a,k} He_a(x) psi_k(v)` with `c ~ N(0, 1) / (1 + |a| + |k|)^2`.
pub fn random_perturbation(disc: &Discretization, seed: u64) -> KineticState {
    let d = disc.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = multi_indices(d, RANDOM_DEGREE);
    let vs: Vec<usize> = (0..disc.n_modes()).filter(|&s| disc.vel.degree(s) <= RANDOM_DEGREE).collect();
    let mut h = disc.zeros();
    let n = disc.n_nodes();
    let mut x = vec![0.0; d];
    let basis: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            disc.grid.coords(i, &mut x);
            let tables: Vec<Vec<f64>> = x.iter().map(|&y| hermite_orthonormal(RANDOM_DEGREE, y)).collect();
            xs.iter().map(|a| a.iter().enumerate().map(|(j, &aj)| tables[j][aj]).product()).collect()
        })
        .collect();
    for &s in &vs {
        for (ai, a) in xs.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let w = (1 + a.iter().sum::<usize>() + disc.vel.degree(s)) as f64;
            let c = z / (w * w);
            let slot = h.slot_mut(s);
            for i in 0..n {
                slot[i] += c * basis[i][ai];
            }
        }
    }
    h
}
