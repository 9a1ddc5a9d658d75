//! Parabolic solvers on the torus.
//!
//! The heat part is always integrated exactly per Fourier mode; transport
//! terms are explicit. Time-dependent outputs carry `n_t + 1` slices on the
//! grid's time nodes.

mod duhamel;
mod kolmogorov;
mod picard;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{lp_norm, Field, GridSpec};
use crate::report::ratio;
use crate::spectral::bessel_potential_slice;

pub use duhamel::{duhamel, schauder_probe, DuhamelConfig, Integrator, SchauderIndices};
pub use kolmogorov::{
    backward_kolmogorov, backward_kolmogorov_with, fokker_planck, fokker_planck_energy,
    fokker_planck_with, kolmogorov_energy, Stepping,
};
pub use picard::{
    gradient_bound_check, lambda_search, picard_kolmogorov, LambdaSearch, PicardConfig, LAMBDA_CAP,
    PicardSolution,
};

/// `e^{-|xi|^2 t}` applied to every slice.
pub fn heat_semigroup(f: &Field, t: f64) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::config(format!("heat semigroup needs t >= 0, got {t}")));
    }
    let fourier = Fourier::new(f.grid());
    let slices = (0..f.n_slices()).map(|k| fourier.heat(f.slice(k), t)).collect();
    Field::from_slices(f.grid(), slices, format!("P_t {}", f.label))
}

/// `(e^z - 1) / z`, accurate near zero.
pub(crate) fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z - 1 - z) / z^2`, accurate near zero.
pub(crate) fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Norms of the energy space: `sup_t ||u||_2`, `||grad u||_{L^2_T L^2}` and
/// `||u||_{L^inf}`, with an optional bound attached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "sup_L2")]
    pub sup_l2: f64,
    #[serde(rename = "grad_L2")]
    pub grad_l2: f64,
    pub linf: f64,
    pub bound: f64,
    pub ratio: f64,
}

impl EnergyReport {
    /// `sup_t ||u||_2 + ||grad u||_{L^2_T}`.
    pub fn energy(&self) -> f64 {
        self.sup_l2 + self.grad_l2
    }

    pub fn with_bound(mut self, measured: f64, bound: f64) -> Self {
        self.bound = bound;
        self.ratio = ratio(measured, bound);
        self
    }
}

/// Trapezoid weights on the grid's time nodes; a single slice stands for a
/// field constant on `[0, T]`.
pub(crate) fn time_weights(grid: &GridSpec, n_slices: usize) -> Vec<f64> {
    if n_slices == 1 {
        return vec![grid.time_horizon];
    }
    let dt = grid.slice_dt();
    let mut w = vec![dt; n_slices];
    w[0] = 0.5 * dt;
    w[n_slices - 1] = 0.5 * dt;
    w
}

/// `L^q` in time of a per-slice sequence (trapezoid rule; `q = inf` is the max).
pub(crate) fn time_norm(grid: &GridSpec, values: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    }
    let w = time_weights(grid, values.len());
    values
        .iter()
        .zip(&w)
        .map(|(v, w)| w * v.abs().powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

pub fn energy_norm(u: &Field) -> EnergyReport {
    let grid = u.grid();
    let fourier = Fourier::new(grid);
    let vol = grid.cell_volume();
    let mut sup_l2 = 0.0f64;
    let mut grad_sq = Vec::with_capacity(u.n_slices());
    for k in 0..u.n_slices() {
        let s = u.slice(k);
        sup_l2 = sup_l2.max(lp_norm(s, 2.0, vol));
        let g: f64 = fourier
            .gradient(s)
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() * vol)
            .sum();
        grad_sq.push(g);
    }
    let w = time_weights(grid, u.n_slices());
    let grad_l2 = grad_sq.iter().zip(&w).map(|(g, w)| g * w).sum::<f64>().sqrt();
    EnergyReport {
        sup_l2,
        grad_l2,
        linf: u.max_abs(),
        bound: 0.0,
        ratio: 0.0,
    }
}

/// `||f||_{L^q_T H^alpha_p}`.
pub fn bessel_time_norm(f: &Field, alpha: f64, p: f64, q: f64) -> f64 {
    let fourier = Fourier::new(f.grid());
    let vol = f.grid().cell_volume();
    let per_slice: Vec<f64> = (0..f.n_slices())
        .map(|k| lp_norm(&bessel_potential_slice(f.slice(k), alpha, &fourier), p, vol))
        .collect();
    time_norm(f.grid(), &per_slice, q)
}

/// Supercritical index set: `alpha in [-1, 0]`, `p, q in [2, inf]`,
/// `d/p + 2/q < 2 + alpha`.
pub fn check_supercritical(dim: usize, alpha: f64, p: f64, q: f64) -> Result<()> {
    if !(-1.0..=0.0).contains(&alpha) || !(p >= 2.0) || !(q >= 2.0) {
        return Err(Error::config(format!(
            "(alpha, p, q) = ({alpha}, {p}, {q}) outside [-1,0] x [2,inf]^2"
        )));
    }
    let lhs = dim as f64 / p + 2.0 / q;
    if lhs < 2.0 + alpha {
        Ok(())
    } else {
        Err(Error::config(format!(
            "d/p + 2/q = {lhs} is not below 2 + alpha = {}",
            2.0 + alpha
        )))
    }
}

/// Subcritical drift indices: `d/p_b + 2/q_b < 1 + alpha_b`.
pub fn check_subcritical(dim: usize, alpha_b: f64, p_b: f64, q_b: f64) -> Result<()> {
    if !(p_b >= 1.0) || !(q_b >= 1.0) {
        return Err(Error::config("p_b and q_b must lie in [1, inf]"));
    }
    let lhs = dim as f64 / p_b + 2.0 / q_b;
    if lhs < 1.0 + alpha_b {
        Ok(())
    } else {
        Err(Error::config(format!(
            "d/p_b + 2/q_b = {lhs} is not below 1 + alpha_b = {}",
            1.0 + alpha_b
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(2, 2.0 * PI, 32, 1.0, 4).unwrap()
    }

    #[test]
    fn phi_functions_match_direct_formulas() {
        for z in [-50.0f64, -2.0, -0.1, -2e-3, -5e-4, -1e-8, 0.0] {
            let direct1 = if z == 0.0 { 1.0 } else { z.exp_m1() / z };
            assert!((phi1(z) - direct1).abs() < 1e-12);
            if z.abs() > 1e-2 {
                assert!((phi2(z) - (z.exp_m1() - z) / (z * z)).abs() < 1e-12);
            }
        }
        assert!((phi2(-1e-4) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn heat_identity_mode_and_mass() {
        let g = grid();
        let f = Field::from_fn(&g, "f", |x| 0.3 + (2.0 * x[0] + x[1]).cos());
        assert!(heat_semigroup(&f, -1.0).is_err());
        assert_eq!(heat_semigroup(&f, 0.0).unwrap().data(), f.data());
        let t = 0.2;
        let p = heat_semigroup(&f, t).unwrap();
        for (i, v) in p.data().iter().enumerate() {
            let x = g.coords(i);
            let exact = 0.3 + (-5.0 * t).exp() * (2.0 * x[0] + x[1]).cos();
            assert!((v - exact).abs() < 1e-13);
        }
        assert!((p.mean(0) - f.mean(0)).abs() < 1e-15);
    }

    #[test]
    fn energy_norm_of_sine() {
        let g = grid();
        let u = Field::from_fn(&g, "u", |x| x[0].sin()).broadcast_in_time();
        let r = energy_norm(&u);
        let oracle = (2.0 * PI * PI).sqrt();
        assert!((r.sup_l2 - oracle).abs() < 1e-12);
        assert!((r.grad_l2 - oracle).abs() < 1e-12);
        assert!((r.linf - 1.0).abs() < 1e-12);
        let z = energy_norm(&Field::zeros(&g, 5, "z"));
        assert_eq!((z.sup_l2, z.grad_l2, z.linf, z.bound, z.ratio), (0.0, 0.0, 0.0, 0.0, 0.0));
        let json = serde_json::to_value(r).unwrap();
        assert!(json.get("sup_L2").is_some() && json.get("grad_L2").is_some());
    }

    #[test]
    fn index_sets() {
        assert!(check_supercritical(2, 0.0, 2.0, f64::INFINITY).is_ok());
        assert!(check_supercritical(2, -1.0, 2.0, 2.0).is_err());
        assert!(check_supercritical(2, 0.5, 2.0, 2.0).is_err());
        assert!(check_subcritical(2, -0.1, f64::INFINITY, f64::INFINITY).is_ok());
        assert!(check_subcritical(2, 0.0, 2.0, f64::INFINITY).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn semigroup_law(s in 0.0f64..0.5, t in 0.0f64..0.5, k1 in 0i32..6, k2 in 0i32..6) {
            let g = grid();
            let f = Field::from_fn(&g, "f", |x| 1.0 + (k1 as f64 * x[0] + k2 as f64 * x[1]).sin() + (x[1]).cos());
            let a = heat_semigroup(&heat_semigroup(&f, s).unwrap(), t).unwrap();
            let b = heat_semigroup(&f, s + t).unwrap();
            let scale = b.max_abs();
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1e-12 * scale));
        }

        #[test]
        fn energy_norm_is_homogeneous(c in -5.0f64..5.0) {
            let g = grid();
            let u = Field::from_fn_t(&g, "u", |t, x| (1.0 + t) * (x[0] + 2.0 * x[1]).sin());
            let a = energy_norm(&u.scaled(c));
            let b = energy_norm(&u);
            for (x, y) in [(a.sup_l2, b.sup_l2), (a.grad_l2, b.grad_l2), (a.linf, b.linf)] {
                prop_assert!((x - c.abs() * y).abs() <= 1e-12 * (1.0 + y));
            }
        }
    }
}
