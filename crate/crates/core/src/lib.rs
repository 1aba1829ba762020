//! Simulation and numerical verification of the tail rates for the exit
//! position and exit time of Brownian motion from parabola-shaped regions
//! `{(x, Y) : x > 0, |Y| < A x^alpha}` in `R^n`.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: regions, membership, boundary distance, crosscuts.
//! * [`special`]: Bessel functions of real order, first zeros, rate constants.
//! * [`conformal`]: strip harmonic measure, boundary correspondence, the map `h`.
//! * [`sampler`]: path simulation with bridge-corrected exits and walk-on-spheres.
//! * [`rare_event`]: fixed-effort multilevel splitting.
//! * [`strip_pde`]: the perturbed Bessel operator on half-strip rectangles.
//! * [`carleman`]: scalar quantities and inequality checks of the Carleman method.
//! * [`stats`]: stretched-exponential rate fitting and theoretical predictions.

pub mod carleman;
pub mod conformal;
pub mod error;
pub mod geometry;
pub mod quad;
pub mod rare_event;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod strip_pde;
pub mod sum;

pub use error::{Error, Result};
pub use geometry::{ParabolaRegion, PointND};
