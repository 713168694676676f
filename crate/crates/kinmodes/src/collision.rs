//! Linear BGK relaxation towards the local collision invariants.

use crate::basis::{Discretization, KineticState, MacroFields};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BgkOperator {
    pub rate: f64,
    /// First slot outside `span{1, v, E}`.
    pub micro_start: usize,
}

impl BgkOperator {
    pub fn new(disc: &Discretization, rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Config(format!("collision rate must be positive (got {rate})")));
        }
        Ok(BgkOperator { rate, micro_start: disc.vel.micro_start() })
    }

    /// Spectral gap of the operator, equal to the rate.
    pub fn gap(&self) -> f64 {
        self.rate
    }

    fn check(&self, h: &KineticState) -> Result<()> {
        if h.n_modes <= self.micro_start {
            return Err(Error::ShapeMismatch(format!("state has only {} velocity modes", h.n_modes)));
        }
        Ok(())
    }

    /// `C h = -rate (h - Pi h)`
    pub fn apply(&self, h: &KineticState) -> Result<KineticState> {
        self.check(h)?;
        let mut out = h.clone();
        let cut = self.micro_start * h.n_nodes;
        out.data[..cut].iter_mut().for_each(|v| *v = 0.0);
        out.data[cut..].iter_mut().for_each(|v| *v *= -self.rate);
        Ok(out)
    }

    /// `out += coef * C h`
    pub fn apply_add(&self, h: &KineticState, out: &mut KineticState, coef: f64) {
        let cut = self.micro_start * h.n_nodes;
        let c = -coef * self.rate;
        for (o, v) in out.data[cut..].iter_mut().zip(&h.data[cut..]) {
            *o += c * v;
        }
    }

    /// Exact flow `exp(t C)`: the microscopic part decays by `exp(-rate t)`.
    pub fn exact_step(&self, h: &mut KineticState, t: f64) {
        let f = (-self.rate * t).exp();
        let cut = self.micro_start * h.n_nodes;
        h.data[cut..].iter_mut().for_each(|v| *v *= f);
    }
}

/// Splits `h` into its macroscopic fields and microscopic remainder.
pub fn micro_projection(disc: &Discretization, h: &KineticState) -> (MacroFields, KineticState) {
    let fields = disc.macro_fields(h);
    let mut perp = h.clone();
    let cut = disc.vel.micro_start() * h.n_nodes;
    perp.data[..cut].iter_mut().for_each(|v| *v = 0.0);
    (fields, perp)
}

/// `Pi h`, the projection on the collision invariants.
pub fn macro_part(disc: &Discretization, h: &KineticState) -> KineticState {
    let mut par = h.clone();
    let cut = disc.vel.micro_start() * h.n_nodes;
    par.data[cut..].iter_mut().for_each(|v| *v = 0.0);
    par
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{normalize, NormalizeOptions, RawPotential};
    use std::sync::Arc;

    fn disc(d: usize) -> Discretization {
        let pot = normalize(&RawPotential::fully_harmonic(d), NormalizeOptions::default()).unwrap();
        Discretization::new(Arc::new(pot), 16, None, 4).unwrap()
    }

    #[test]
    fn kernel_is_annihilated() {
        let dd = disc(2);
        let c = BgkOperator::new(&dd, 1.5).unwrap();
        let h = dd.project(|x, v| 1.0 + x[0] * v[0] + (v[0] * v[0] + v[1] * v[1] - 2.0) / 8f64.sqrt());
        assert!(dd.norm(&c.apply(&h).unwrap()) < 1e-12);
    }

    #[test]
    fn off_kernel_mode_scales() {
        let dd = disc(2);
        let c = BgkOperator::new(&dd, 0.7).unwrap();
        let h = dd.project(|_, v| v[0] * v[1]);
        let mut ch = c.apply(&h).unwrap();
        ch.axpy(0.7, &h).unwrap();
        assert!(dd.norm(&ch) < 1e-12);
    }

    #[test]
    fn bad_rate() {
        let dd = disc(1);
        assert!(BgkOperator::new(&dd, 0.0).is_err());
    }
}
