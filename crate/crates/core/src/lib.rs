//! Transfer operators, Gibbs measures and zero-temperature limits for
//! one-dimensional lattice systems with a general a-priori probability.
//!
//! Every state space is a finite list of atoms (a finite alphabet, a
//! quadrature grid on the circle or the interval, or a truncated countable
//! alphabet), and every potential has finite range, so all operators are
//! finite dimensional and the identities between them hold to rounding.

pub mod error;
pub mod gibbs;
pub mod involution;
pub mod numeric;
pub mod orbits;
pub mod oracles;
pub mod potential;
pub mod space;
pub mod transfer;
pub mod zerotemp;

pub use error::{Error, Result};
