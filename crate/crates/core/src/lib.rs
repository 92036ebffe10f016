//! Precision limits for open quantum systems under two-point measurements.
//!
//! The crate builds repeated-interaction models (a system meeting fresh
//! environments), enumerates or samples their measurement trajectories, and
//! evaluates the generalized thermodynamic and kinetic uncertainty relations
//! together with the quantities they involve: entropy production `Σ`, the
//! forward-backward asymmetry `Σ*`, the boundary term `𝔟` and the
//! inactivity `𝒫`. A Markovian (Lindblad) module covers the short-time
//! limit, and [`experiment`] reproduces the random-model scatter and coupling
//! sweep studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod markov;
pub mod model;
pub mod qlinalg;
pub mod rng;
pub mod tol;
pub mod trajectories;

pub use error::{Error, Result};
pub use tol::Tolerances;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/markov.md")]
    mod markov {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
