use serde::{Deserialize, Serialize};

use super::ensemble::PathEnsemble;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::stats::weighted_linear_fit;

/// Smallest count a radial bin may hold before it is merged outward.
const MIN_COUNT: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    pub r2_lo: f64,
    pub r2_hi: f64,
    pub count: usize,
    pub density: f64,
}

/// Fit of `log rho(t, x0, x) = c - gamma |x - x0|^2 / t` to the radial
/// histogram of terminal displacements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub t: f64,
    pub bins: Vec<RadialBin>,
    /// Tail bins merged because they held fewer than 30 samples.
    pub merged: usize,
    /// Weighted coefficient of determination of the fit.
    pub r2: f64,
    /// Fitted `gamma`; the heat kernel has `1/4`.
    pub gamma: f64,
    /// Fit over the inner half of the bins.
    pub gamma_bulk: f64,
    /// Fit over the outer half of the bins.
    pub gamma_tail: f64,
    /// Every radial bin within three standard deviations `3 sqrt(2t)` of
    /// the start holds samples.
    pub bulk_positive: bool,
}

impl DensityReport {
    /// Lower and upper envelope exponents `(gamma_0, gamma_1)`.
    pub fn sandwich(&self) -> (f64, f64) {
        (self.gamma_bulk.max(self.gamma_tail), self.gamma_bulk.min(self.gamma_tail))
    }
}

fn ball_volume(d: usize, r: f64) -> f64 {
    let unit = match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => 4.0 / 3.0 * std::f64::consts::PI,
    };
    unit * r.powi(d as i32)
}

fn fit(bins: &[RadialBin], t: f64) -> (f64, f64) {
    let x: Vec<f64> = bins.iter().map(|b| 0.5 * (b.r2_lo + b.r2_hi)).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.density.ln()).collect();
    let w: Vec<f64> = bins.iter().map(|b| b.count as f64).collect();
    let line = weighted_linear_fit(&x, &y, &w);
    (-line.slope * t, line.r2)
}

/// Histogram of the terminal positions of an ensemble started from one
/// point, on the grid cells and in `n_bins` radial shells of equal width in
/// `|x - x0|^2`. Displacements are unwrapped, so the radial fit sees the
/// whole-space kernel.
pub fn transition_density(ens: &PathEnsemble, n_bins: usize) -> Result<(Field, DensityReport)> {
    let grid = &ens.grid;
    let d = grid.dim;
    let m = ens.n_paths();
    let last = ens.n_steps();
    let t = ens.time(last);
    let x0 = ens.position(0, 0).to_vec();
    if (1..m).any(|p| ens.position(p, 0) != x0.as_slice()) {
        return Err(Error::config("transition density needs a fixed starting point"));
    }
    if n_bins < 4 {
        return Err(Error::config("need at least 4 radial bins"));
    }
    if 3.0 * (2.0 * t).sqrt() > 0.5 * grid.side_length {
        log::warn!("3 sqrt(2t) = {:.3} exceeds half the torus; the histogram wraps", 3.0 * (2.0 * t).sqrt());
    }

    let n = grid.n();
    let h = grid.cell_width();
    let mut counts = vec![0usize; grid.n_points()];
    let mut r2 = Vec::with_capacity(m);
    let mut idx = vec![0usize; d];
    for p in 0..m {
        let x = ens.position(p, last);
        for a in 0..d {
            let cell = (x[a].rem_euclid(grid.side_length) / h).round() as usize;
            idx[a] = cell % n;
        }
        counts[grid.flatten(&idx)] += 1;
        r2.push(x.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
    }
    let scale = 1.0 / (m as f64 * grid.cell_volume());
    let hist = Field::from_data(grid, 1, counts.iter().map(|c| *c as f64 * scale).collect(), "density")?;

    let r2_max = r2.iter().cloned().fold(0.0, f64::max) * (1.0 + 1e-12);
    if !(r2_max > 0.0) {
        return Err(Error::config("all paths ended at the starting point"));
    }
    let width = r2_max / n_bins as f64;
    let mut raw = vec![0usize; n_bins];
    for v in &r2 {
        raw[((v / width) as usize).min(n_bins - 1)] += 1;
    }
    // widen from the outside in until every bin is populated enough
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    let mut merged = 0;
    let mut hi = n_bins;
    let mut acc = 0;
    for i in (0..n_bins).rev() {
        acc += raw[i];
        if acc >= MIN_COUNT || i == 0 {
            merged += hi - i - 1;
            edges.push((i, hi, acc));
            hi = i;
            acc = 0;
        }
    }
    edges.reverse();
    if merged > 0 {
        log::warn!("merged {merged} sparse radial bins into wider tail bins");
    }
    let bins: Vec<RadialBin> = edges
        .iter()
        .filter(|e| e.2 > 0)
        .map(|&(lo, hi, count)| {
            let (a, b) = (lo as f64 * width, hi as f64 * width);
            let shell = ball_volume(d, b.sqrt()) - ball_volume(d, a.sqrt());
            RadialBin {
                r2_lo: a,
                r2_hi: b,
                count,
                density: count as f64 / (m as f64 * shell),
            }
        })
        .collect();
    if bins.len() < 4 {
        return Err(Error::config("too few populated radial bins for a fit"));
    }
    let (gamma, r2_fit) = fit(&bins, t);
    let half = bins.len() / 2;
    let (gamma_bulk, _) = fit(&bins[..half], t);
    let (gamma_tail, _) = fit(&bins[half..], t);
    let ball = 9.0 * 2.0 * t;
    let bulk_positive = edges.iter().filter(|e| (e.0 as f64) * width < ball).all(|e| e.2 > 0);
    Ok((
        hist,
        DensityReport {
            t,
            bins,
            merged,
            r2: r2_fit,
            gamma,
            gamma_bulk,
            gamma_tail,
            bulk_positive,
        },
    ))
}
