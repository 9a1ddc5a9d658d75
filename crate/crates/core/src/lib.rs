//! Simulation and verification toolkit for diffusions with singular,
//! divergence-free drifts on the periodic torus.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: Littlewood-Paley blocks, Besov/Bessel norms, paraproducts.
//! - [`fields`]: Gaussian drift synthesis, mollification, Biot-Savart, heat environments.
//! - [`pde`]: heat semigroup, Duhamel, Picard, Kolmogorov and Fokker-Planck solvers.
//! - [`sde`]: Euler-Maruyama ensembles and the Monte-Carlo checks built on them.

pub mod error;
pub mod fields;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod pde;
pub mod report;
pub mod rng;
pub mod sde;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, VectorField};
pub use report::EstimateReport;
pub use rng::NoiseSeed;
