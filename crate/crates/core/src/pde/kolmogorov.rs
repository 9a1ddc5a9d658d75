use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::duhamel::check_slices;
use super::{bessel_time_norm, energy_norm, phi1, phi2, EnergyReport};
use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{lp_norm, Field, GridSpec, VectorField};

/// Substeps per slice interval; `None` picks them from the drift size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stepping {
    pub substeps: Option<usize>,
}

/// Growth factor of the max norm that counts as blowup.
const BLOWUP: f64 = 1e6;

/// Explicit transport is stable with the exact heat factor once
/// `h |b|_inf^2` stays below this.
const CFL: f64 = 0.2;

fn auto_substeps(grid: &GridSpec, b: &VectorField) -> usize {
    let bmax = b.max_norm();
    let dt = grid.slice_dt();
    ((dt * bmax * bmax / CFL).ceil() as usize).max(1)
}

fn check_drift(grid: &GridSpec, b: &VectorField) -> Result<()> {
    grid.check_same_space(b.grid())?;
    if b.n_slices() != 1 && b.n_slices() != grid.time_steps + 1 {
        return Err(Error::GridMismatch(format!(
            "drift has {} slices, expected 1 or {}",
            b.n_slices(),
            grid.time_steps + 1
        )));
    }
    if b.components().iter().any(|c| c.data().iter().any(|v| !v.is_finite())) {
        return Err(Error::config("drift has non-finite values"));
    }
    Ok(())
}

/// Exponential time differencing of order two for `v' = Laplace v + N`.
struct Etd2 {
    decay: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl Etd2 {
    fn new(fourier: &Fourier, h: f64) -> Self {
        let mut decay = Vec::with_capacity(fourier.len());
        let mut w1 = Vec::with_capacity(fourier.len());
        let mut w2 = Vec::with_capacity(fourier.len());
        for k2 in fourier.k2() {
            let z = -k2 * h;
            decay.push(z.exp());
            w1.push(h * phi1(z));
            w2.push(h * phi2(z));
        }
        Etd2 { decay, w1, w2 }
    }

    fn step(&self, v: &mut [Complex64], n: &[Complex64], prev: &[Complex64]) {
        for (m, x) in v.iter_mut().enumerate() {
            *x = *x * self.decay[m] + n[m] * self.w1[m] + (n[m] - prev[m]) * self.w2[m];
        }
    }
}

/// Drift components at time `t`.
fn drift_at(b: &VectorField, t: f64) -> Vec<Vec<f64>> {
    b.components().iter().map(|c| c.at_time(t)).collect()
}

/// Spectrum of `f(t)` from per-slice spectra, linear in time.
fn spectrum_at(grid: &GridSpec, specs: &[Vec<Complex64>], t: f64) -> Vec<Complex64> {
    if specs.len() == 1 {
        return specs[0].clone();
    }
    let (k, w) = crate::grid::time_bracket(grid, t);
    if w == 0.0 {
        return specs[k].clone();
    }
    specs[k]
        .iter()
        .zip(&specs[k + 1])
        .map(|(a, b)| a * (1.0 - w) + b * w)
        .collect()
}

fn check_growth(v: &[f64], reference: f64, step: usize) -> Result<()> {
    let m = v.iter().fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::INFINITY });
    if m > BLOWUP * reference {
        return Err(Error::Instability {
            step,
            detail: format!("max norm {m:.3e} exceeds {BLOWUP:.0e} x {reference:.3e}"),
        });
    }
    Ok(())
}

/// `(sum_a b_a d_a v)^`, dealiased, from the spectrum of `v`.
fn transport_spec(fourier: &Fourier, b: &[Vec<f64>], v: &[Complex64]) -> Vec<Complex64> {
    let mut acc = vec![0.0; fourier.len()];
    for (a, ba) in b.iter().enumerate() {
        let mut d = v.to_vec();
        fourier.differentiate_spec(&mut d, a);
        let d = fourier.inverse(d);
        acc.iter_mut().zip(ba.iter().zip(&d)).for_each(|(s, (x, y))| *s += x * y);
    }
    let mut s = fourier.forward(&acc);
    fourier.dealias_spec(&mut s);
    s
}

pub fn backward_kolmogorov(b: &VectorField, f: &Field, t_end: f64) -> Result<Field> {
    backward_kolmogorov_with(b, f, t_end, Stepping::default())
}

/// Solves `d_s u + Laplace u + b·grad u = f` on `[0, t_end]`, `u(t_end) = 0`,
/// by reversing time and stepping with ETD2. Slices after `t_end` are zero.
pub fn backward_kolmogorov_with(
    b: &VectorField,
    f: &Field,
    t_end: f64,
    stepping: Stepping,
) -> Result<Field> {
    let grid = f.grid();
    check_drift(grid, b)?;
    check_slices(f)?;
    let dt = grid.slice_dt();
    let big_k = (t_end / dt).round();
    if !(t_end >= 0.0) || t_end > grid.time_horizon * (1.0 + 1e-12) || (big_k * dt - t_end).abs() > 1e-9 * grid.time_horizon {
        return Err(Error::config(format!(
            "terminal time {t_end} must be a time node in [0, {}]",
            grid.time_horizon
        )));
    }
    let big_k = big_k as usize;
    let fourier = Fourier::new(grid);
    let s = stepping.substeps.unwrap_or_else(|| auto_substeps(grid, b)).max(1);
    let h = dt / s as f64;
    let etd = Etd2::new(&fourier, h);
    let f_specs: Vec<Vec<Complex64>> = (0..f.n_slices()).map(|k| fourier.forward(f.slice(k))).collect();
    let reference = (t_end * f.max_abs()).max(f64::MIN_POSITIVE);

    let np = grid.n_points();
    let mut out = vec![vec![0.0; np]; grid.time_steps + 1];
    let mut v = vec![Complex64::default(); np];
    let nonlinear = |v: &[Complex64], tau: f64| {
        let time = t_end - tau;
        let mut n = transport_spec(&fourier, &drift_at(b, time), v);
        let fs = spectrum_at(grid, &f_specs, time);
        n.iter_mut().zip(&fs).for_each(|(a, b)| *a -= b);
        n
    };
    let mut prev: Option<Vec<Complex64>> = None;
    for n_step in 0..big_k * s {
        let n = nonlinear(&v, n_step as f64 * h);
        etd.step(&mut v, &n, prev.as_deref().unwrap_or(&n));
        prev = Some(n);
        if (n_step + 1) % s == 0 {
            let k = big_k - (n_step + 1) / s;
            out[k] = fourier.inverse(v.clone());
            check_growth(&out[k], reference, n_step + 1)?;
        }
    }
    Field::from_slices(grid, out, "u")
}

pub fn fokker_planck(b: &VectorField, rho0: &Field) -> Result<Field> {
    fokker_planck_with(b, rho0, Stepping::default())
}

/// Solves `d_t rho = Laplace rho - div(b rho)` in flux form: the divergence is
/// applied in Fourier space, so the zero mode (the mass) never changes.
pub fn fokker_planck_with(b: &VectorField, rho0: &Field, stepping: Stepping) -> Result<Field> {
    let grid = rho0.grid();
    check_drift(grid, b)?;
    if !rho0.is_static() {
        return Err(Error::config("initial density must be a single slice"));
    }
    let peak = rho0.max_abs();
    if rho0.data().iter().any(|v| *v < -1e-12 * peak || !v.is_finite()) {
        return Err(Error::config("initial density must be nonnegative"));
    }
    let mass = rho0.integral(0);
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::config(format!("initial density has mass {mass}, expected 1")));
    }
    let fourier = Fourier::new(grid);
    let s = stepping.substeps.unwrap_or_else(|| auto_substeps(grid, b)).max(1);
    let h = grid.slice_dt() / s as f64;
    let etd = Etd2::new(&fourier, h);
    let nonlinear = |v: &[Complex64], t: f64| {
        let rho = fourier.inverse(v.to_vec());
        let mut acc = vec![Complex64::default(); fourier.len()];
        for (a, ba) in drift_at(b, t).iter().enumerate() {
            let flux: Vec<f64> = ba.iter().zip(&rho).map(|(x, r)| x * r).collect();
            let mut fs = fourier.forward(&flux);
            fourier.differentiate_spec(&mut fs, a);
            acc.iter_mut().zip(&fs).for_each(|(x, y)| *x -= y);
        }
        fourier.dealias_spec(&mut acc);
        acc
    };
    let mut v = fourier.forward(rho0.slice(0));
    let mut out = Vec::with_capacity(grid.time_steps + 1);
    out.push(rho0.slice(0).to_vec());
    let mut prev: Option<Vec<Complex64>> = None;
    for n_step in 0..grid.time_steps * s {
        let n = nonlinear(&v, n_step as f64 * h);
        etd.step(&mut v, &n, prev.as_deref().unwrap_or(&n));
        prev = Some(n);
        if (n_step + 1) % s == 0 {
            let rho = fourier.inverse(v.clone());
            check_growth(&rho, peak, n_step + 1)?;
            out.push(rho);
        }
    }
    Field::from_slices(grid, out, "rho")
}

/// Energy of a density against `(kappa + 1) e^kappa (1 + 2^{-1/2}) ||rho_0||_2`.
/// The `1 + 2^{-1/2}` accounts for both parts of the energy norm: the
/// identity `||rho(t)||^2 + 2 int ||grad rho||^2 = ||rho_0||^2` bounds the
/// gradient part by `||rho_0||_2 / sqrt 2`.
pub fn fokker_planck_energy(rho: &Field, kappa: f64) -> EnergyReport {
    let report = energy_norm(rho);
    let rho0 = lp_norm(rho.slice(0), 2.0, rho.grid().cell_volume());
    let bound = (kappa + 1.0) * kappa.exp() * (1.0 + std::f64::consts::FRAC_1_SQRT_2) * rho0;
    report.with_bound(report.energy(), bound)
}

/// `||u||_inf + ||u||_V` against `||f||_{L^q_T H^alpha_p}`; the constant is
/// left at 1, so only the ratio's behaviour is meaningful.
pub fn kolmogorov_energy(u: &Field, f: &Field, alpha: f64, p: f64, q: f64) -> EnergyReport {
    let report = energy_norm(u);
    let bound = bessel_time_norm(f, alpha, p, q);
    report.with_bound(report.linf + report.energy(), bound)
}

#[cfg(test)]
mod tests {
    use super::super::{duhamel, heat_semigroup, DuhamelConfig, Integrator};
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(2, 2.0 * PI, 32, 0.5, 10).unwrap()
    }

    fn shear(g: &GridSpec, amp: f64) -> VectorField {
        let b0 = Field::from_fn(g, "b0", |x| amp * x[1].sin());
        let b1 = Field::from_fn(g, "b1", |x| amp * x[0].cos());
        VectorField::new(vec![b0, b1], true).unwrap()
    }

    fn bump(g: &GridSpec) -> Field {
        let raw = Field::from_fn(g, "rho", |x| {
            let r2 = (x[0] - PI).powi(2) + (x[1] - PI).powi(2);
            (-r2 / 0.5).exp()
        });
        let mass = raw.integral(0);
        raw.scaled(1.0 / mass)
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let g = grid();
        let u = backward_kolmogorov(&shear(&g, 1.0), &Field::zeros(&g, 1, "f"), 0.5).unwrap();
        assert!(u.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn terminal_time_must_be_a_node() {
        let g = grid();
        let f = Field::from_fn(&g, "f", |x| x[0].sin());
        let b = shear(&g, 1.0);
        assert!(backward_kolmogorov(&b, &f, 0.33).is_err());
        assert!(backward_kolmogorov(&b, &f, 0.6).is_err());
        let u = backward_kolmogorov(&b, &f, 0.3).unwrap();
        assert!(u.slice(6).iter().all(|v| *v == 0.0));
        assert!(u.slice(10).iter().all(|v| *v == 0.0));
        assert!(u.slice(0).iter().any(|v| *v != 0.0));
    }

    #[test]
    fn no_drift_matches_reversed_duhamel() {
        let g = grid();
        let f = Field::from_fn(&g, "f", |x| (x[0] + x[1]).cos() + 0.3 * (3.0 * x[1]).sin() + 0.2);
        let b = VectorField::zeros(&g, 1, "b");
        let u = backward_kolmogorov(&b, &f, 0.5).unwrap();
        let w = duhamel(&f, &DuhamelConfig::new(0.0, 10, Integrator::ExponentialEuler)).unwrap();
        for k in 0..=10 {
            // u(s) = -I(f)(t - s) for forcing constant in time
            let exact = w.slice(10 - k);
            let scale = w.max_abs();
            for (a, e) in u.slice(k).iter().zip(exact) {
                assert!((a + e).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn heat_only_density_matches_semigroup() {
        let g = grid();
        let rho0 = bump(&g);
        let rho = fokker_planck(&VectorField::zeros(&g, 1, "b"), &rho0).unwrap();
        for k in 0..=10 {
            let p = heat_semigroup(&rho0, g.time_of(k)).unwrap();
            let scale = p.max_abs();
            for (a, e) in rho.slice(k).iter().zip(p.data()) {
                assert!((a - e).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn density_conserves_mass_and_dissipates() {
        let g = grid();
        let rho0 = bump(&g);
        let rho = fokker_planck(&shear(&g, 3.0), &rho0).unwrap();
        let l2_0 = rho.lp_norm(0, 2.0);
        for k in 0..=10 {
            assert!((rho.integral(k) - 1.0).abs() <= 1e-8);
            assert!(rho.lp_norm(k, 2.0) <= l2_0 * (1.0 + 1e-6));
        }
        let e = fokker_planck_energy(&rho, 0.0);
        assert!(e.ratio <= 1.0, "{e:?}");
    }

    #[test]
    fn density_input_checks() {
        let g = grid();
        let b = shear(&g, 1.0);
        assert!(fokker_planck(&b, &bump(&g).scaled(2.0)).is_err());
        assert!(fokker_planck(&b, &bump(&g).scaled(-1.0)).is_err());
    }

    #[test]
    fn duality_with_backward_equation() {
        let g = grid();
        let b = shear(&g, 2.0);
        let f = Field::from_fn(&g, "f", |x| (x[0] - 2.0 * x[1]).sin() + x[1].cos());
        let rho0 = bump(&g);
        let stepping = Stepping { substeps: Some(40) };
        let u = backward_kolmogorov_with(&b, &f, 0.5, stepping).unwrap();
        let rho = fokker_planck_with(&b, &rho0, stepping).unwrap();
        let vol = g.cell_volume();
        let inner = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>() * vol;
        let start = inner(u.slice(0), rho.slice(0));
        let along: Vec<f64> = (0..=10).map(|k| inner(f.slice(0), rho.slice(k))).collect();
        let dt = g.slice_dt();
        let integral: f64 = along.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum();
        let defect = (start + integral).abs();
        assert!(defect <= 2e-3 * integral.abs().max(start.abs()), "{start} {integral}");
    }

    #[test]
    fn blowup_is_reported() {
        let g = grid();
        let f = Field::from_fn(&g, "f", |x| x[0].sin());
        let b = shear(&g, 200.0);
        let r = backward_kolmogorov_with(&b, &f, 0.5, Stepping { substeps: Some(1) });
        assert!(matches!(r, Err(Error::Instability { .. })), "{r:?}");
    }

    #[test]
    fn kolmogorov_energy_ratio_is_finite() {
        let g = grid();
        let f = Field::from_fn(&g, "f", |x| x[0].sin());
        let u = backward_kolmogorov(&shear(&g, 1.0), &f, 0.5).unwrap();
        let e = kolmogorov_energy(&u, &f, -0.5, 2.0, f64::INFINITY);
        assert!(e.ratio.is_finite() && e.ratio > 0.0 && e.bound > 0.0);
    }
}
