use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{phi1, time_norm};
use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{Field, GridSpec};
use crate::report::EstimateReport;
use crate::spectral::{besov_from_blocks, block_norms_slice, build_partition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Forcing frozen at the left end of each substep.
    ExponentialEuler,
    /// Forcing sampled at the substep midpoint.
    ExponentialMidpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelConfig {
    pub lambda: f64,
    pub quadrature_steps: usize,
    pub integrator: Integrator,
}

impl DuhamelConfig {
    pub fn new(lambda: f64, quadrature_steps: usize, integrator: Integrator) -> Self {
        DuhamelConfig {
            lambda,
            quadrature_steps,
            integrator,
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.quadrature_steps < grid.time_steps {
            return Err(Error::config(format!(
                "quadrature_steps = {} below the {} time steps of the grid",
                self.quadrature_steps, grid.time_steps
            )));
        }
        Ok(())
    }

    /// Substeps per slice interval.
    pub(crate) fn substeps(&self, grid: &GridSpec) -> usize {
        self.quadrature_steps.div_ceil(grid.time_steps).max(1)
    }
}

/// Spectral core of the Duhamel operator. `forcing` holds one spectrum
/// (constant in time) or one per time node; the result has one per node, the
/// first being zero.
pub(crate) fn duhamel_spectra(
    fourier: &Fourier,
    forcing: &[Vec<Complex64>],
    cfg: &DuhamelConfig,
) -> Vec<Vec<Complex64>> {
    let grid = fourier.grid();
    let np = fourier.len();
    let n_slices = grid.time_steps + 1;
    let s = cfg.substeps(grid);
    let h = grid.slice_dt() / s as f64;
    let (decay, weight): (Vec<f64>, Vec<f64>) = fourier
        .k2()
        .iter()
        .map(|k2| {
            let z = -(k2 + cfg.lambda) * h;
            (z.exp(), h * phi1(z))
        })
        .unzip();
    let offset = match cfg.integrator {
        Integrator::ExponentialEuler => 0.0,
        Integrator::ExponentialMidpoint => 0.5,
    };
    let mut state = vec![Complex64::default(); np];
    let mut out = Vec::with_capacity(n_slices);
    out.push(state.clone());
    for k in 0..grid.time_steps {
        let (f0, f1) = if forcing.len() == 1 {
            (&forcing[0], &forcing[0])
        } else {
            (&forcing[k], &forcing[k + 1])
        };
        for i in 0..s {
            let w = (i as f64 + offset) / s as f64;
            state
                .par_iter_mut()
                .enumerate()
                .with_min_len(4096)
                .for_each(|(m, u)| {
                    let f = f0[m] * (1.0 - w) + f1[m] * w;
                    *u = *u * decay[m] + f * weight[m];
                });
        }
        out.push(state.clone());
    }
    out
}

pub(crate) fn check_slices(f: &Field) -> Result<()> {
    let expected = f.grid().time_steps + 1;
    if f.n_slices() != 1 && f.n_slices() != expected {
        return Err(Error::GridMismatch(format!(
            "forcing has {} slices, expected 1 or {expected}",
            f.n_slices()
        )));
    }
    Ok(())
}

/// `I^lambda_t(f) = int_0^t e^{-lambda (t-s)} P_{t-s} f_s ds` on every time
/// node, i.e. the mild solution of `du = (Laplace - lambda) u + f`, `u(0) = 0`.
/// A single-slice `f` is treated as constant in time.
pub fn duhamel(f: &Field, cfg: &DuhamelConfig) -> Result<Field> {
    let grid = f.grid();
    cfg.validate(grid)?;
    check_slices(f)?;
    let fourier = Fourier::new(grid);
    let forcing: Vec<_> = (0..f.n_slices()).map(|k| fourier.forward(f.slice(k))).collect();
    let slices = duhamel_spectra(&fourier, &forcing, cfg)
        .into_iter()
        .map(|s| fourier.inverse(s))
        .collect();
    Field::from_slices(grid, slices, format!("I[{}]", f.label))
}

/// Indices of a Schauder probe: input `L^q_T B^alpha_{p,r}`, output
/// `L^{q_out}_T B^s_{p_out,r}` with
/// `s = 2 + alpha - d (1/p - 1/p_out) - 2 (1/q - 1/q_out) - theta`.
/// `theta > 0` trades regularity for the decay `(1 + lambda)^{-theta/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchauderIndices {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub p_out: f64,
    pub q_out: f64,
    pub r: f64,
    pub theta: f64,
}

impl SchauderIndices {
    pub fn validate(&self) -> Result<()> {
        let ok = 1.0 <= self.p
            && self.p <= self.p_out
            && 1.0 <= self.q
            && self.q <= self.q_out
            && self.r >= 1.0
            && (0.0..=2.0).contains(&self.theta)
            && self.alpha.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "invalid Schauder indices {self:?}: need 1 <= p <= p_out, 1 <= q <= q_out, r >= 1, theta in [0, 2]"
            )))
        }
    }

    pub fn output_regularity(&self, dim: usize) -> f64 {
        2.0 + self.alpha
            - dim as f64 * (1.0 / self.p - 1.0 / self.p_out)
            - 2.0 * (1.0 / self.q - 1.0 / self.q_out)
            - self.theta
    }
}

/// For each `lambda`, the ratio of `||I^lambda(f)||` in the output norm to
/// `||f||` in the input norm. The constant is not known, so the bound slot
/// holds the input norm and `pass` only asserts a finite ratio.
pub fn schauder_probe(
    f: &Field,
    indices: &SchauderIndices,
    lambdas: &[f64],
) -> Result<Vec<EstimateReport>> {
    indices.validate()?;
    let grid = f.grid();
    check_slices(f)?;
    let partition = build_partition(grid)?;
    let fourier = Fourier::new(grid);
    let s_out = indices.output_regularity(grid.dim);

    let block_besov = |x: &[f64], alpha: f64, p: f64| {
        let norms = block_norms_slice(x, p, &partition, &fourier);
        besov_from_blocks(&norms, alpha, indices.r)
    };
    let rhs_slices: Vec<f64> = (0..f.n_slices())
        .map(|k| block_besov(f.slice(k), indices.alpha, indices.p))
        .collect();
    let rhs = time_norm(grid, &rhs_slices, indices.q);

    let forcing: Vec<_> = (0..f.n_slices()).map(|k| fourier.forward(f.slice(k))).collect();
    let steps = 4 * grid.time_steps;
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = DuhamelConfig::new(lambda, steps, Integrator::ExponentialMidpoint);
            cfg.validate(grid)?;
            let lhs_slices: Vec<f64> = duhamel_spectra(&fourier, &forcing, &cfg)
                .into_iter()
                .map(|s| block_besov(&fourier.inverse(s), s_out, indices.p_out))
                .collect();
            let lhs = time_norm(grid, &lhs_slices, indices.q_out);
            let pass = lhs.is_finite() && rhs.is_finite();
            Ok(EstimateReport::new(format!("schauder lambda={lambda}"), lhs, rhs, pass))
        })
        .collect()
}
