use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::check_subcritical;
use super::duhamel::{check_slices, duhamel_spectra, DuhamelConfig, Integrator};
use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{Field, VectorField};
use crate::spectral::{build_partition, DriftBlocks};

fn default_integrator() -> Integrator {
    Integrator::ExponentialMidpoint
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Relative sup-norm change that stops the iteration.
    pub tol: f64,
    pub alpha_b: f64,
    pub p_b: f64,
    pub q_b: f64,
    /// Duhamel quadrature steps; defaults to the grid's time steps.
    #[serde(default)]
    pub quadrature_steps: Option<usize>,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
}

impl PicardConfig {
    pub fn new(lambda: f64, alpha_b: f64, p_b: f64, q_b: f64) -> Self {
        PicardConfig {
            lambda,
            max_iters: 100,
            tol: 1e-8,
            alpha_b,
            p_b,
            q_b,
            quadrature_steps: None,
            integrator: default_integrator(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("Picard tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("Picard needs at least one iteration"));
        }
        check_subcritical(dim, self.alpha_b, self.p_b, self.q_b)
    }

    fn duhamel(&self, time_steps: usize) -> DuhamelConfig {
        DuhamelConfig::new(
            self.lambda,
            self.quadrature_steps.unwrap_or(time_steps),
            self.integrator,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardSolution {
    pub u: Field,
    pub iterations: usize,
    /// Relative sup-norm change of each iterate; entry `m` compares `u^{m+1}`
    /// with `u^m`, starting from `u^0 = 0`.
    pub residuals: Vec<f64>,
}

fn drift_slices(b: &VectorField, k: usize) -> Vec<&[f64]> {
    b.components().iter().map(|c| c.slice_or_static(k)).collect()
}

/// Fixed point of `u = I^lambda(b ⊙ ∇u - div b ≼ u + f)`, i.e. the mild
/// solution of `du = (Laplace - lambda) u + b·∇u + f`, `u(0) = 0`.
/// The transport term is 2/3-dealiased before the heat step. A drift flagged
/// divergence-free skips the `≼` correction.
pub fn picard_kolmogorov(b: &VectorField, f: &Field, cfg: &PicardConfig) -> Result<PicardSolution> {
    let grid = f.grid();
    cfg.validate(grid.dim)?;
    grid.check_same_space(b.grid())?;
    check_slices(f)?;
    if b.n_slices() != 1 && b.n_slices() != grid.time_steps + 1 {
        return Err(Error::GridMismatch(format!(
            "drift has {} slices, expected 1 or {}",
            b.n_slices(),
            grid.time_steps + 1
        )));
    }
    let dcfg = cfg.duhamel(grid.time_steps);
    dcfg.validate(grid)?;
    let partition = build_partition(grid)?;
    let fourier = Fourier::new(grid);
    let n_slices = grid.time_steps + 1;
    let with_div = !b.divergence_free;
    let blocks: Vec<DriftBlocks> = (0..b.n_slices())
        .map(|k| DriftBlocks::new(&drift_slices(b, k), &partition, &fourier, with_div))
        .collect();
    let f_specs: Vec<Vec<Complex64>> = (0..f.n_slices())
        .map(|k| fourier.forward(f.slice(k)))
        .collect();

    let mut u: Vec<Vec<f64>> = vec![vec![0.0; grid.n_points()]; n_slices];
    let mut residuals = Vec::new();
    for it in 1..=cfg.max_iters {
        let forcing: Vec<Vec<Complex64>> = (0..n_slices)
            .map(|k| {
                let bk = &blocks[if blocks.len() == 1 { 0 } else { k }];
                let (mut transport, correction) = bk.decompose(&u[k], &partition, &fourier);
                if let Some(c) = correction {
                    transport.iter_mut().zip(&c).for_each(|(a, c)| *a -= c);
                }
                let mut s = fourier.forward(&transport);
                fourier.dealias_spec(&mut s);
                let fk = &f_specs[if f_specs.len() == 1 { 0 } else { k }];
                s.iter_mut().zip(fk).for_each(|(a, b)| *a += b);
                s
            })
            .collect();
        let next: Vec<Vec<f64>> = duhamel_spectra(&fourier, &forcing, &dcfg)
            .into_iter()
            .map(|s| fourier.inverse(s))
            .collect();
        let mut diff = 0.0f64;
        let mut size = 0.0f64;
        for (a, b) in next.iter().flatten().zip(u.iter().flatten()) {
            diff = diff.max((a - b).abs());
            size = size.max(a.abs());
        }
        let r = if diff == 0.0 { 0.0 } else { diff / size };
        residuals.push(r);
        u = next;
        if !r.is_finite() {
            break;
        }
        if r < cfg.tol {
            return Ok(PicardSolution {
                u: Field::from_slices(grid, u, "u")?,
                iterations: it,
                residuals,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: residuals.len(),
        residuals,
    })
}

/// `sup_t max_x |grad u(t, x)|` with the spectral gradient.
pub fn gradient_bound_check(u: &Field) -> f64 {
    let fourier = Fourier::new(u.grid());
    (0..u.n_slices())
        .map(|k| {
            let g = fourier.gradient(u.slice(k));
            (0..u.grid().n_points())
                .map(|i| g.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Outcome of the damping search.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSearch {
    pub lambda: f64,
    pub solution: PicardSolution,
    pub gradient: f64,
    /// `(lambda, gradient bound)` per attempt; infinite when Picard failed.
    pub attempts: Vec<(f64, f64)>,
}

pub const LAMBDA_CAP: f64 = 65536.0;

/// Double `lambda` from 1 until Picard converges and the gradient bound is at
/// most 1/2. Past `2^16` the attempts come back as a non-convergence error
/// whose residuals are the per-attempt gradient bounds.
pub fn lambda_search(b: &VectorField, f: &Field, cfg: &PicardConfig) -> Result<LambdaSearch> {
    let mut attempts = Vec::new();
    let mut lambda = 1.0;
    while lambda <= LAMBDA_CAP {
        let trial = PicardConfig { lambda, ..*cfg };
        match picard_kolmogorov(b, f, &trial) {
            Ok(solution) => {
                let gradient = gradient_bound_check(&solution.u);
                attempts.push((lambda, gradient));
                if gradient <= 0.5 {
                    return Ok(LambdaSearch {
                        lambda,
                        solution,
                        gradient,
                        attempts,
                    });
                }
            }
            Err(Error::NonConvergence { .. }) => attempts.push((lambda, f64::INFINITY)),
            Err(e) => return Err(e),
        }
        lambda *= 2.0;
    }
    Err(Error::NonConvergence {
        iterations: attempts.len(),
        residuals: attempts.into_iter().map(|(_, g)| g).collect(),
    })
}
