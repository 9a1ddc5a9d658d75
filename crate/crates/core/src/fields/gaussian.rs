use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::{mode_key, SpectralMeasureSpec};
use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{Field, GridSpec, VectorField};
use crate::rng::{normal_pair, NoiseSeed};
use crate::spectral::is_canonical;

/// Apply `I - m m^T / |m|^2` to a complex vector in place.
///
/// A vector already orthogonal to `m` up to rounding is left untouched, which
/// makes the projection idempotent bitwise.
pub fn leray_project(m: &[f64], v: &mut [Complex64]) {
    let m2: f64 = m.iter().map(|x| x * x).sum();
    if m2 == 0.0 {
        return;
    }
    let dot: Complex64 = m.iter().zip(v.iter()).map(|(a, b)| b * a).sum();
    let vnorm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if dot.norm() <= 1e-13 * m2.sqrt() * vnorm {
        return;
    }
    let c = dot / m2;
    v.iter_mut().zip(m).for_each(|(x, a)| *x -= c * a);
}

/// Modes carrying independent draws: one representative per conjugate pair,
/// zero mode and Nyquist planes excluded, optional physical cutoff.
pub(crate) fn active_modes(fourier: &Fourier, cutoff: Option<f64>) -> Vec<usize> {
    let k2 = fourier.k2();
    (0..fourier.len())
        .filter(|&i| {
            is_canonical(fourier.modes_of(i))
                && !fourier.is_nyquist(i)
                && cutoff.is_none_or(|c| k2[i] <= c * c)
        })
        .collect()
}

/// Complex standard normal with `E|g|^2 = 1`.
pub(crate) fn complex_normal(rng: &mut impl rand::RngCore) -> Complex64 {
    let (a, b) = normal_pair(rng);
    Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Per-component DFT spectra of a Gaussian field.
fn gaussian_spectra(
    fourier: &Fourier,
    gamma: f64,
    cutoff: Option<f64>,
    amplitude: f64,
    n_comp: usize,
    project: bool,
    seed: &NoiseSeed,
) -> Vec<Vec<Complex64>> {
    let grid = fourier.grid();
    let d = grid.dim;
    let np = grid.n_points();
    // continuum coefficient variance |xi|^{-gamma} (2 pi / L)^d, times N^d for the DFT
    let scale = amplitude * grid.k_unit().powf(0.5 * d as f64) * np as f64;
    let modes = active_modes(fourier, cutoff);
    let draws: Vec<Vec<Complex64>> = modes
        .par_iter()
        .map(|&flat| {
            let m = fourier.modes_of(flat);
            let mut rng = seed.rng(mode_key(m));
            let mut v: Vec<Complex64> = (0..n_comp).map(|_| complex_normal(&mut rng)).collect();
            if project {
                let mf: Vec<f64> = m.iter().map(|&x| x as f64).collect();
                leray_project(&mf, &mut v);
            }
            let amp = scale * fourier.k2()[flat].powf(-0.25 * gamma);
            v.iter_mut().for_each(|c| *c *= amp);
            v
        })
        .collect();
    let mut spectra = vec![vec![Complex64::default(); np]; n_comp];
    for (&flat, v) in modes.iter().zip(&draws) {
        let conj = fourier.conjugate_index(flat);
        for (a, c) in v.iter().enumerate() {
            spectra[a][flat] = *c;
            spectra[a][conj] = c.conj();
        }
    }
    spectra
}

/// Real Gaussian vector field with coefficients
/// `bhat(xi) = |xi|^{-gamma/2} P(xi) ghat(xi)` for complex white noise `ghat`.
/// Every draw depends only on `(seed, mode)`, never on the grid order.
pub fn synth_gaussian_field(
    grid: &GridSpec,
    spec: &SpectralMeasureSpec,
    seed: NoiseSeed,
) -> Result<VectorField> {
    spec.validate(grid)?;
    let fourier = Fourier::new(grid);
    let spectra = gaussian_spectra(
        &fourier,
        spec.gamma,
        spec.cutoff,
        spec.amplitude,
        grid.dim,
        spec.divergence_free,
        &seed,
    );
    let comps = spectra
        .into_iter()
        .enumerate()
        .map(|(a, s)| Field::from_data(grid, 1, fourier.inverse(s), format!("b[{a}]")))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps, spec.divergence_free)
}

/// Scalar Gaussian field with coefficient variance `|xi|^{-gamma}`.
pub fn synth_scalar_field(
    grid: &GridSpec,
    gamma: f64,
    cutoff: Option<f64>,
    seed: NoiseSeed,
) -> Result<Field> {
    if !(gamma < grid.dim as f64) {
        return Err(Error::config(format!("gamma = {gamma} must be below the dimension")));
    }
    let fourier = Fourier::new(grid);
    let mut spectra = gaussian_spectra(&fourier, gamma, cutoff, 1.0, 1, false, &seed);
    Field::from_data(grid, 1, fourier.inverse(spectra.remove(0)), "g")
}
