//! Linear kinetic equations in a confining potential: special macroscopic
//! modes, hypocoercive decay and the geometric constants behind it.

pub mod basis;
pub mod cli;
pub mod collision;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod hermite;
pub mod initial;
pub mod modes;
pub mod potential;
pub mod spectral;
pub mod witten;

pub use error::{Error, Result};
