//! Space–time ultra-weak discontinuous Galerkin solver for the linear
//! Schrödinger equation `i ∂_t ψ + ½ Δψ − V ψ = 0` with full-polynomial,
//! quasi-Trefftz and complex-exponential Trefftz discrete spaces.

pub mod analysis;
pub mod assembly;
pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod polyalg;
pub mod solver;
pub mod potential;
pub mod problems;

pub use error::{Error, Result};
