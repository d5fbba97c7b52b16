//! Dimension estimates for conformal repellers and random hyperbolic Julia sets.
//!
//! The dimension is computed as the zero of the pressure function
//! `P(s) = lim (1/n) log ‖L_s^n 1‖` of the transfer operator
//!
//! ```text
//! (L_s φ)(y) = Σ_{f(x) = y} Df(x)^{-s} φ(x)
//! ```
//!
//! where `Df` is the conformal derivative measured in the hyperbolic metric of
//! the annulus `U` that the maps cover. The crate is `no_std` (with `alloc`);
//! enable the `parallel` feature to spread operator application over threads.
//!
//! Module map:
//!
//! * [`geometry`]: annulus metric, distances and the distortion constants.
//! * [`maps`]: the map families, their preimages and derivatives.
//! * [`transfer`]: grid-discretized transfer operators and pressure brackets.
//! * [`solver`]: root finding for the critical exponent.
//! * [`random`]: i.i.d. ensembles of `z^(N+2) + c` and parameter sweeps.
//! * [`boxcount`]: backward-orbit point clouds and box-counting dimension.
//! * [`components`]: δ-connected components, transition graph and per-class pressure.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod boxcount;
pub mod components;
mod error;
pub mod geometry;
pub mod maps;
pub mod random;
pub mod solver;
pub mod transfer;

pub use error::{Error, Result};
pub use geometry::{DomainConstants, HyperbolicAnnulus};
pub use maps::{IfsBranch, MapDescriptor, MapKind, PreimageSet};
pub use num_complex::Complex64;
pub use transfer::{GridFunction, GridShape, PressureEstimate};

pub(crate) mod prelude {
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    pub use num_complex::Complex64;
    pub use num_traits::Float;

    pub use crate::error::{Error, Result};
}
