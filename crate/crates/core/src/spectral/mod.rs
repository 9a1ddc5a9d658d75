//! Littlewood-Paley calculus on the periodic grid.
//!
//! The dyadic partition is laid out on integer mode numbers `m` (physical
//! wavenumber `xi = 2 pi m / L`). The base multiplier is the radial bump
//!
//! ```text
//! phi_{-1}(m) = h(|m|),   h = 1 on [0, 1/2],  h = 0 on [2/3, inf)
//! phi_j(m)    = h(2^{-(j+1)} |m|) - h(2^{-j} |m|),   j >= 0
//! ```
//!
//! where `h` falls from 1 to 0 through the normalized integral of
//! `exp(-1/(1 - t^2))`. The sum over `j <= j_max` telescopes to
//! `h(2^{-(j_max+1)} |m|)`, which is exactly 1 for `|m| <= N/4`.

mod bspace;
mod paraproduct;

use std::sync::OnceLock;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{lp_norm, Field, GridSpec, VectorField};

pub use bspace::b_space_norm_estimate;
pub(crate) use bspace::is_canonical;
pub(crate) use paraproduct::DriftBlocks;
pub use paraproduct::{
    drift_gradient_decomp, paraproduct_low, paraproduct_resonant, para_low_blocks,
    para_resonant_blocks,
};

/// Regularity/integrability triple `(alpha, p, q)` of a Besov norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
}

impl BesovIndex {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self> {
        let idx = BesovIndex { alpha, p, q };
        idx.validate()?;
        Ok(idx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && (-3.0..=3.0).contains(&self.alpha)) {
            return Err(Error::config(format!("regularity {} outside [-3, 3]", self.alpha)));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if v.is_nan() || v < 1.0 {
                return Err(Error::config(format!("{name} = {v} outside [1, inf]")));
            }
        }
        Ok(())
    }
}

/// Smooth radial profile of `phi_{-1}`.
pub fn bump_profile(r: f64) -> f64 {
    const LO: f64 = 0.5;
    const HI: f64 = 2.0 / 3.0;
    if r <= LO {
        1.0
    } else if r >= HI {
        0.0
    } else {
        let t = 2.0 * (r - LO) / (HI - LO) - 1.0;
        (1.0 - transition_integral(t) / transition_integral(1.0)).clamp(0.0, 1.0)
    }
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// `int_{-1}^t exp(-1/(1 - s^2)) ds` by 64-point Gauss-Legendre.
fn transition_integral(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let (nodes, weights) = gauss_legendre();
    let half = 0.5 * (t + 1.0);
    let mid = 0.5 * (t - 1.0);
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * bump(mid + half * x))
        .sum::<f64>()
        * half
}

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 64;
        let mut nodes = vec![0.0; N];
        let mut weights = vec![0.0; N];
        for i in 0..N.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=N {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[N - 1 - i] = x;
            weights[i] = w;
            weights[N - 1 - i] = w;
        }
        (nodes, weights)
    })
}

/// Bank of Fourier multipliers `phi_j`, `j = -1..=j_max`.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: GridSpec,
    multipliers: Vec<Vec<f64>>,
    j_max: i32,
}

pub fn build_partition(grid: &GridSpec) -> Result<DyadicPartition> {
    grid.validate()?;
    let j_max = grid.j_max();
    if j_max < 1 {
        return Err(Error::config(format!(
            "grid too coarse for a dyadic decomposition (j_max = {j_max})"
        )));
    }
    let fourier = Fourier::new(grid);
    let radii: Vec<f64> = (0..grid.n_points()).map(|i| fourier.mode_norm(i)).collect();
    let mut multipliers = Vec::with_capacity(j_max as usize + 2);
    multipliers.push(radii.iter().map(|&r| bump_profile(r)).collect());
    for j in 0..=j_max {
        let outer = 0.5f64.powi(j + 1);
        let inner = 0.5f64.powi(j);
        multipliers.push(
            radii
                .iter()
                .map(|&r| bump_profile(outer * r) - bump_profile(inner * r))
                .collect(),
        );
    }
    Ok(DyadicPartition {
        grid: grid.clone(),
        multipliers,
        j_max,
    })
}

impl DyadicPartition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Number of blocks, `j_max + 2`.
    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    pub fn check_index(&self, j: i32) -> Result<()> {
        if (-1..=self.j_max).contains(&j) {
            Ok(())
        } else {
            Err(Error::Index {
                j,
                min: -1,
                max: self.j_max,
            })
        }
    }

    /// `phi_j` on the FFT layout.
    pub fn multiplier(&self, j: i32) -> Result<&[f64]> {
        self.check_index(j)?;
        Ok(&self.multipliers[(j + 1) as usize])
    }

    /// All blocks `R_j x` of one slice, ordered `j = -1..=j_max`.
    pub fn blocks(&self, fourier: &Fourier, x: &[f64]) -> Vec<Vec<f64>> {
        self.blocks_of_spectrum(fourier, &fourier.forward(x))
    }

    pub fn blocks_of_spectrum(&self, fourier: &Fourier, spec: &[Complex64]) -> Vec<Vec<f64>> {
        self.multipliers
            .iter()
            .map(|m| {
                let s: Vec<Complex64> = spec.iter().zip(m).map(|(c, w)| c * w).collect();
                fourier.inverse(s)
            })
            .collect()
    }
}

fn single_slice(f: &Field) -> Result<&[f64]> {
    if !f.is_static() {
        return Err(Error::config(format!(
            "'{}' has {} time slices; expected a single slice",
            f.label,
            f.n_slices()
        )));
    }
    Ok(f.slice(0))
}

/// Littlewood-Paley block `R_j f`, applied to every time slice.
pub fn dyadic_block(f: &Field, j: i32, partition: &DyadicPartition) -> Result<Field> {
    f.grid().check_same_space(partition.grid())?;
    let mult = partition.multiplier(j)?;
    let fourier = Fourier::new(f.grid());
    let slices = (0..f.n_slices())
        .map(|k| fourier.apply_real(f.slice(k), mult))
        .collect();
    Field::from_slices(f.grid(), slices, format!("R_{j}({})", f.label))
}

/// Low-frequency cutoff `S_k f = sum_{j=-1}^{k-1} R_j f`. The sum is empty for
/// `k <= -1`, so `S_0 = R_{-1}`; indices past `j_max + 1` saturate at the
/// full resolved sum.
pub fn low_cutoff(f: &Field, k: i32, partition: &DyadicPartition) -> Result<Field> {
    f.grid().check_same_space(partition.grid())?;
    let top = (k - 1).min(partition.j_max);
    let mut mult = vec![0.0; f.grid().n_points()];
    for j in -1..=top {
        let m = partition.multiplier(j)?;
        mult.iter_mut().zip(m).for_each(|(a, b)| *a += b);
    }
    let fourier = Fourier::new(f.grid());
    let slices = (0..f.n_slices())
        .map(|s| fourier.apply_real(f.slice(s), &mult))
        .collect();
    Field::from_slices(f.grid(), slices, format!("S_{k}({})", f.label))
}

/// `||R_j f||_p` for every block of one slice.
pub fn block_norms_slice(
    x: &[f64],
    p: f64,
    partition: &DyadicPartition,
    fourier: &Fourier,
) -> Vec<f64> {
    let vol = partition.grid.cell_volume();
    partition
        .blocks(fourier, x)
        .iter()
        .map(|b| lp_norm(b, p, vol))
        .collect()
}

pub fn block_norms(f: &Field, p: f64, partition: &DyadicPartition) -> Result<Vec<f64>> {
    f.grid().check_same_space(partition.grid())?;
    let x = single_slice(f)?;
    Ok(block_norms_slice(x, p, partition, &Fourier::new(f.grid())))
}

/// Weighted `l^q` combination of block norms, block `i` carrying index `j = i - 1`.
pub fn besov_from_blocks(norms: &[f64], alpha: f64, q: f64) -> f64 {
    let weighted = norms
        .iter()
        .enumerate()
        .map(|(i, n)| 2f64.powf(alpha * (i as f64 - 1.0)) * n);
    if q.is_infinite() {
        weighted.fold(0.0, f64::max)
    } else {
        weighted.map(|w| w.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

pub fn besov_norm_slice(
    x: &[f64],
    idx: BesovIndex,
    partition: &DyadicPartition,
    fourier: &Fourier,
) -> f64 {
    besov_from_blocks(&block_norms_slice(x, idx.p, partition, fourier), idx.alpha, idx.q)
}

/// `||f||_{B^alpha_{p,q}}` of a single-slice field.
pub fn besov_norm(f: &Field, idx: BesovIndex, partition: &DyadicPartition) -> Result<f64> {
    idx.validate()?;
    f.grid().check_same_space(partition.grid())?;
    let x = single_slice(f)?;
    Ok(besov_norm_slice(x, idx, partition, &Fourier::new(f.grid())))
}

/// Log-linear fit of the `L^2` block norms of a vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityFit {
    /// `(j, log2 ||R_j b||_2)` over the fitted blocks.
    pub blocks: Vec<(i32, f64)>,
    pub slope: f64,
    /// Minus the slope: the Besov exponent the blocks decay at.
    pub measured_exponent: f64,
}

/// Fits `log2 ||R_j b||_2` against `j` over `1 <= j <= j_max` at slice `k`,
/// the norm taken over all components together.
pub fn regularity_fit(b: &VectorField, k: usize, partition: &DyadicPartition) -> Result<RegularityFit> {
    b.grid().check_same_space(partition.grid())?;
    if k >= b.n_slices() {
        return Err(Error::config(format!("slice {k} of {}", b.n_slices())));
    }
    if partition.j_max() < 2 {
        return Err(Error::config("grid too coarse for a block fit"));
    }
    let fourier = Fourier::new(b.grid());
    let mut sq = vec![0.0; partition.len()];
    for c in b.components() {
        for (s, n) in sq.iter_mut().zip(block_norms_slice(c.slice(k), 2.0, partition, &fourier)) {
            *s += n * n;
        }
    }
    let blocks: Vec<(i32, f64)> = (1..=partition.j_max())
        .map(|j| (j, 0.5 * sq[(j + 1) as usize].log2()))
        .collect();
    let xs: Vec<f64> = blocks.iter().map(|b| b.0 as f64).collect();
    let ys: Vec<f64> = blocks.iter().map(|b| b.1).collect();
    let slope = crate::stats::linear_fit(&xs, &ys).slope;
    Ok(RegularityFit {
        blocks,
        slope,
        measured_exponent: -slope,
    })
}

pub fn bessel_potential_slice(x: &[f64], alpha: f64, fourier: &Fourier) -> Vec<f64> {
    if alpha == 0.0 {
        return x.to_vec();
    }
    let k2 = fourier.k2();
    fourier.apply_fn(x, |i| (1.0 + k2[i]).powf(0.5 * alpha))
}

/// `||(I - Delta)^{alpha/2} f||_p` of a single-slice field.
pub fn bessel_norm(f: &Field, alpha: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::config(format!("p = {p} outside [1, inf]")));
    }
    let x = single_slice(f)?;
    let fourier = Fourier::new(f.grid());
    let y = bessel_potential_slice(x, alpha, &fourier);
    Ok(lp_norm(&y, p, f.grid().cell_volume()))
}
