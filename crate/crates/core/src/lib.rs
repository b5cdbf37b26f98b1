//! Thermodynamic formalism for interval maps presented through inducing
//! schemes over countable full shifts.
//!
//! The crate computes Gurevich pressures (periodic-orbit sums and a
//! collocated transfer operator), normalizing constants, Gibbs and
//! equilibrium measures, entropies, lifted-measure integrals and condition
//! checks. Every quantity over the countable alphabet is computed at an
//! explicit truncation level and reported with its tail estimate.

pub mod equilibrium;
pub mod error;
pub mod expr;
pub mod measure;
pub mod numeric;
pub mod potential;
pub mod pressure;
pub mod report;
pub mod scheme;
pub mod symbolic;
pub mod tail;
pub mod transfer;

pub use error::{Error, Result};
