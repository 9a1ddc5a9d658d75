use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::gaussian::{active_modes, complex_normal, leray_project};
use super::mode_key;
use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{Field, GridSpec, VectorField};
use crate::rng::NoiseSeed;

/// Divergence-free solution of `du = Laplace u dt + dW`, `u(0) = 0`, where the
/// noise has spectral measure `|xi|^{-gamma}` projected onto divergence-free
/// fields. Each mode follows its exact Ornstein-Uhlenbeck transition between
/// time slices, so the output has no time-stepping error.
pub fn she_environment(grid: &GridSpec, gamma: f64, seed: NoiseSeed) -> Result<VectorField> {
    grid.validate()?;
    let d = grid.dim;
    if !(gamma < d as f64 - 2.0) {
        return Err(Error::config(format!(
            "heat environment needs gamma < d - 2 = {}, got {gamma}",
            d as f64 - 2.0
        )));
    }
    if grid.time_steps < 2 {
        return Err(Error::config("heat environment needs at least two time steps"));
    }
    let fourier = Fourier::new(grid);
    let np = grid.n_points();
    let n_slices = grid.time_steps + 1;
    let dt = grid.slice_dt();
    let scale = grid.k_unit().powf(0.5 * d as f64) * np as f64;
    let modes = active_modes(&fourier, None);

    let paths: Vec<Vec<Complex64>> = modes
        .par_iter()
        .map(|&flat| {
            let m = fourier.modes_of(flat);
            let mf: Vec<f64> = m.iter().map(|&x| x as f64).collect();
            let k2 = fourier.k2()[flat];
            let decay = (-k2 * dt).exp();
            let sigma2 = k2.powf(-0.5 * gamma);
            let step_sd = scale * (sigma2 * -(-2.0 * k2 * dt).exp_m1() / (2.0 * k2)).sqrt();
            let mut rng = seed.rng(mode_key(m));
            let mut state = vec![Complex64::default(); d];
            let mut out = Vec::with_capacity(n_slices * d);
            out.extend_from_slice(&state);
            for _ in 1..n_slices {
                let mut g: Vec<Complex64> = (0..d).map(|_| complex_normal(&mut rng)).collect();
                leray_project(&mf, &mut g);
                for (s, z) in state.iter_mut().zip(&g) {
                    *s = *s * decay + z * step_sd;
                }
                out.extend_from_slice(&state);
            }
            out
        })
        .collect();

    let mut comps = Vec::with_capacity(d);
    for a in 0..d {
        let mut data = Vec::with_capacity(n_slices * np);
        for k in 0..n_slices {
            let mut spec = vec![Complex64::default(); np];
            for (&flat, path) in modes.iter().zip(&paths) {
                let c = path[k * d + a];
                spec[flat] = c;
                spec[fourier.conjugate_index(flat)] = c.conj();
            }
            data.extend(fourier.inverse(spec));
        }
        comps.push(Field::from_data(grid, n_slices, data, format!("u[{a}]"))?);
    }
    VectorField::new(comps, true)
}
