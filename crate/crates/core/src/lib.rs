//! Numerical laboratory for the Green-Gauss integral formula and the
//! div-curl lemma: grid fields, finite-difference operators, a Dirichlet
//! Poisson solver, term-by-term identity evaluation and oscillatory
//! product experiments.

pub mod config;
pub mod diffops;
pub mod error;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod identity;
pub mod io;
pub mod lab;
pub mod poisson;
pub mod quadrature;
pub mod report;
pub mod testfn;

pub use error::{LabError, Result};
