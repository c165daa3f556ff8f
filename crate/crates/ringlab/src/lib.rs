//! Collapsing-ring blow-up for the radial mass-supercritical nonlinear
//! Schrödinger equation `i∂ₜu + Δu + |u|^{p−1}u = 0`.
//!
//! The crate builds the slowly modulated ring profiles to any order, integrates
//! the modulation equations, simulates the radial PDE from well-prepared data and
//! decomposes numerical solutions back into modulation parameters.

pub mod cli;
pub mod config;
pub mod dd;
pub mod decomp;
pub mod error;
pub mod fit;
pub mod groundstate;
pub mod linops;
pub mod modode;
pub mod nlsim;
pub mod numerics;
pub mod ode;
pub mod plot;
pub mod profile;
pub mod verify;

pub use error::{Error, Result};
