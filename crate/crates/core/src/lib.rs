//! Likelihood-free localisation of a continuous point source from a network
//! of concentration sensors.
//!
//! Three candidate plume models ([`dispersion`]) run side by side inside an
//! adaptive multiple-model ABC sampler ([`smc`]); the final weighted
//! populations are averaged over models into a source-location posterior
//! ([`posterior`]). [`abc`] holds the plain rejection sampler, which doubles
//! as a reference for the adaptive one.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abc;
pub mod cli;
pub mod dispersion;
pub mod error;
pub mod io;
pub mod posterior;
pub mod priors;
pub mod rng;
pub mod smc;

pub use error::{Error, Result};
