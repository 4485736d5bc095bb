//! Noncommutative differential calculus on finite digraphs and oriented
//! hypercubic lattices, plus the exact lattice evolution built on top of it.
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration and the
//! parallel step scheduler live in the `phaselattice-cli` crate.
#![no_std]

extern crate alloc;

pub mod charts;
pub mod dynamics;
pub mod error;
pub mod evolve;
pub mod graph_calculus;
pub mod lattice;
pub mod scaling;

pub use error::{Error, Result};

/// Absolute tolerance used for exact algebraic identities and probability checks.
pub const TOL: f64 = 1e-12;
