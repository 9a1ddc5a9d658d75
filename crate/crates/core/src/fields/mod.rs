//! Drift synthesis: Gaussian fields with a prescribed spectral measure,
//! mollification, Biot-Savart vortex drifts and stochastic heat environments.

mod biot_savart;
mod gaussian;
mod mollify;
mod she;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::rng::splitmix64;

pub use biot_savart::{biot_savart_drift, biot_savart_kernel, PointVortices};
pub use gaussian::{leray_project, synth_gaussian_field, synth_scalar_field};
pub use mollify::{mollifier_kernel, mollify, mollify_field, MollifierSpec};
pub use she::she_environment;

/// Isotropic spectral measure `|xi|^{-gamma} P(xi) dxi`, where `P` is the
/// Leray projection when `divergence_free` is set and the identity otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasureSpec {
    pub dim: usize,
    pub gamma: f64,
    pub divergence_free: bool,
    /// Largest physical wavenumber `|xi|` kept.
    pub cutoff: Option<f64>,
    /// Overall factor applied to every coefficient.
    pub amplitude: f64,
}

impl SpectralMeasureSpec {
    pub fn new(dim: usize, gamma: f64) -> Self {
        SpectralMeasureSpec {
            dim,
            gamma,
            divergence_free: true,
            cutoff: None,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if grid.dim != self.dim {
            return Err(Error::config(format!(
                "spectral measure for d={} on a d={} grid",
                self.dim, grid.dim
            )));
        }
        if !(self.gamma < self.dim as f64) {
            return Err(Error::config(format!(
                "gamma = {} must be below the dimension {}",
                self.gamma, self.dim
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::config("amplitude must be finite"));
        }
        if let Some(c) = self.cutoff {
            if !(c > 0.0) {
                return Err(Error::config("cutoff must be positive"));
            }
        }
        Ok(())
    }
}

/// RNG stream key of an integer mode vector, independent of grid size.
pub(crate) fn mode_key(m: &[i32]) -> u64 {
    m.iter()
        .fold(0x243f_6a88_85a3_08d3, |h, &v| splitmix64(h ^ (v as i64 as u64)))
}
