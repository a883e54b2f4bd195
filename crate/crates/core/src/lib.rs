//! Numerical laboratory for viscous vortex-sheet waves of the compressible
//! isentropic Navier-Stokes equations on `T^2 x R` (reduced to one or two
//! space dimensions).
//!
//! The crate provides
//!
//! * the gas model, Rankine-Hugoniot checks and the transverse
//!   characteristic eigen-system ([`model`]),
//! * closed-form self-similar profiles: the error-function wave `Theta`,
//!   Gaussian time-spreading weights and diffusion-wave kernels
//!   ([`profiles`]),
//! * discrete geometry, field storage, finite differences, mode
//!   decomposition and anti-derivatives ([`grid`]),
//! * conservative finite-difference time integration of the compressible
//!   Navier-Stokes equations on torus and truncated-line domains
//!   ([`solver`]),
//! * assembly of the background ansatz (periodic blend with a shift curve,
//!   or viscous wave plus diffusion waves) together with its closed-form
//!   error terms ([`ansatz`]),
//! * perturbation extraction, anti-derivative variables, energy ledgers and
//!   decay-rate fitting ([`diagnostics`]),
//! * ready-made scenario drivers coupling all of the above ([`pipeline`]).
//!
//! The crate is `no_std`-compatible (requires `alloc`); enable the `libm`
//! feature to build without `std`.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("vsheet-core needs either the `std` or the `libm` feature");

pub mod ansatz;
pub mod diagnostics;
pub mod grid;
pub mod math;
pub mod model;
pub mod pipeline;
pub mod profiles;
pub mod solver;
