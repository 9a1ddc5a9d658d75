use rustfft::num_complex::Complex64;

use super::mollify::{mollifier_kernel, MollifierSpec};
use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{Field, GridSpec, VectorField};

/// Blob-regularized Biot-Savart kernel `(x2, -x1) / (|x|^2 + delta^2)`.
/// Odd in `x` bitwise.
pub fn biot_savart_kernel(x: [f64; 2], delta: f64) -> Result<[f64; 2]> {
    let r2 = x[0] * x[0] + x[1] * x[1] + delta * delta;
    if r2 == 0.0 {
        return Err(Error::Singularity(
            "Biot-Savart kernel evaluated at zero separation without regularization".into(),
        ));
    }
    Ok([x[1] / r2, -x[0] / r2])
}

/// Point vortices in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct PointVortices {
    pub positions: Vec<[f64; 2]>,
    pub intensities: Vec<f64>,
    pub delta: f64,
}

pub fn biot_savart_drift(
    positions: Vec<[f64; 2]>,
    intensities: Vec<f64>,
    delta: f64,
) -> Result<PointVortices> {
    if positions.len() != intensities.len() {
        return Err(Error::config(format!(
            "{} positions but {} intensities",
            positions.len(),
            intensities.len()
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::config("blob radius must be nonnegative"));
    }
    if positions.iter().flatten().chain(&intensities).any(|v| !v.is_finite()) {
        return Err(Error::config("vortex data must be finite"));
    }
    Ok(PointVortices {
        positions,
        intensities,
        delta,
    })
}

impl PointVortices {
    /// `sum_j gamma_j K_delta(x - x_j)` in the whole plane.
    pub fn eval(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let mut v = [0.0; 2];
        for (p, g) in self.positions.iter().zip(&self.intensities) {
            let k = biot_savart_kernel([x[0] - p[0], x[1] - p[1]], self.delta)?;
            v[0] += g * k[0];
            v[1] += g * k[1];
        }
        Ok(v)
    }

    /// Periodic grid velocity of the mollified vorticity
    /// `omega = sum_j gamma_j phi_n(. - x_j)`, through the stream function
    /// `Delta psi = 2 pi (omega - mean)` and `u = (d_2 psi, -d_1 psi)`.
    pub fn on_grid(&self, grid: &GridSpec, mollifier: &MollifierSpec) -> Result<VectorField> {
        if grid.dim != 2 {
            return Err(Error::config("Biot-Savart drift needs d = 2"));
        }
        let fourier = Fourier::new(grid);
        let kernel = mollifier_kernel(grid, mollifier)?;
        // shift the origin-centred kernel spectrally, so off-grid positions are exact
        let k_spec = fourier.forward(&kernel);
        let mut spec_total = vec![Complex64::default(); grid.n_points()];
        for (p, g) in self.positions.iter().zip(&self.intensities) {
            for (flat, s) in spec_total.iter_mut().enumerate() {
                let phase = -(fourier.xi(flat, 0) * p[0] + fourier.xi(flat, 1) * p[1]);
                let (sn, cs) = phase.sin_cos();
                *s += k_spec[flat] * Complex64::new(cs, sn) * *g;
            }
        }
        for (flat, s) in spec_total.iter_mut().enumerate() {
            if fourier.is_nyquist(flat) {
                *s = Complex64::default();
            }
        }
        let k2 = fourier.k2();
        let psi: Vec<Complex64> = spec_total
            .iter()
            .zip(k2)
            .map(|(w, k)| if *k == 0.0 { Complex64::default() } else { -w * (2.0 * std::f64::consts::PI / k) })
            .collect();
        let mut u1 = psi.clone();
        fourier.differentiate_spec(&mut u1, 1);
        let mut u2 = psi;
        fourier.differentiate_spec(&mut u2, 0);
        let u1 = fourier.inverse(u1);
        let u2: Vec<f64> = fourier.inverse(u2).into_iter().map(|v| -v).collect();
        VectorField::new(
            vec![
                Field::from_data(grid, 1, u1, "K*omega[0]")?,
                Field::from_data(grid, 1, u2, "K*omega[1]")?,
            ],
            true,
        )
    }
}
