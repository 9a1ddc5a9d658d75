//! Multi-dimensional FFT on the periodic grid plus the handful of Fourier
//! multipliers every other module needs (derivatives, dealiasing).
//!
//! Transforms are unnormalized forward and `1/N^d`-normalized inverse, so a
//! real field `f` has `f(x) = sum_m fhat(m) e^{i xi_m x} / N^d`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

pub struct Fourier {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Integer mode numbers, `dim` per flat index.
    modes: Vec<i32>,
    /// Physical `|xi|^2`.
    k2: Vec<f64>,
}

impl Fourier {
    pub fn new(grid: &GridSpec) -> Self {
        let n = grid.n();
        let d = grid.dim;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let np = grid.n_points();
        let mut modes = vec![0i32; np * d];
        let mut k2 = vec![0.0; np];
        let mut idx = vec![0usize; d];
        let ku = grid.k_unit();
        for flat in 0..np {
            grid.unflatten(flat, &mut idx);
            let mut s = 0.0;
            for a in 0..d {
                let m = mode_number(idx[a], n);
                modes[flat * d + a] = m;
                let xi = ku * m as f64;
                s += xi * xi;
            }
            k2[flat] = s;
        }
        Fourier {
            grid: grid.clone(),
            fwd,
            inv,
            modes,
            k2,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    pub fn modes_of(&self, flat: usize) -> &[i32] {
        let d = self.grid.dim;
        &self.modes[flat * d..(flat + 1) * d]
    }

    /// Euclidean norm of the integer mode vector.
    pub fn mode_norm(&self, flat: usize) -> f64 {
        self.modes_of(flat)
            .iter()
            .map(|&m| (m as f64) * (m as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Physical wavenumber component `xi_a`.
    pub fn xi(&self, flat: usize, axis: usize) -> f64 {
        self.grid.k_unit() * self.modes_of(flat)[axis] as f64
    }

    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// True when any component sits on the unpaired Nyquist frequency `-N/2`.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        let half = (self.grid.n() / 2) as i32;
        self.modes_of(flat).iter().any(|&m| m == -half)
    }

    fn is_nyquist_axis(&self, flat: usize, axis: usize) -> bool {
        self.modes_of(flat)[axis] == -((self.grid.n() / 2) as i32)
    }

    /// Flat index of the mode `-m`.
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let n = self.grid.n() as i32;
        self.modes_of(flat).iter().fold(0usize, |acc, &m| {
            let i = (-m).rem_euclid(n) as usize;
            acc * n as usize + i
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.len());
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse(&self, spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse_complex(spec).into_iter().map(|c| c.re).collect()
    }

    pub fn inverse_complex(&self, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut spec, true);
        let s = 1.0 / self.len() as f64;
        spec.iter_mut().for_each(|c| *c *= s);
        spec
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.inv } else { &self.fwd };
        let n = self.grid.n();
        let d = self.grid.dim;
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // last axis is contiguous: rustfft batches over consecutive chunks
        fft.process_with_scratch(buf, &mut scratch);
        let mut line = vec![Complex64::default(); n];
        for a in 0..d.saturating_sub(1) {
            let stride = n.pow((d - 1 - a) as u32);
            let block = stride * n;
            for base in (0..buf.len()).step_by(block) {
                for inner in 0..stride {
                    for (i, l) in line.iter_mut().enumerate() {
                        *l = buf[base + i * stride + inner];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, l) in line.iter().enumerate() {
                        buf[base + i * stride + inner] = *l;
                    }
                }
            }
        }
    }

    /// Apply a real Fourier multiplier given per flat index.
    pub fn apply_real(&self, x: &[f64], mult: &[f64]) -> Vec<f64> {
        let mut s = self.forward(x);
        s.iter_mut().zip(mult).for_each(|(c, m)| *c *= *m);
        self.inverse(s)
    }

    pub fn apply_fn(&self, x: &[f64], mult: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut s = self.forward(x);
        s.iter_mut().enumerate().for_each(|(i, c)| *c *= mult(i));
        self.inverse(s)
    }

    /// Multiply spectrum in place by `i xi_axis` (zero on the Nyquist plane).
    pub fn differentiate_spec(&self, spec: &mut [Complex64], axis: usize) {
        for (flat, c) in spec.iter_mut().enumerate() {
            if self.is_nyquist_axis(flat, axis) {
                *c = Complex64::default();
            } else {
                let xi = self.xi(flat, axis);
                *c = Complex64::new(-xi * c.im, xi * c.re);
            }
        }
    }

    pub fn derivative(&self, x: &[f64], axis: usize) -> Vec<f64> {
        let mut s = self.forward(x);
        self.differentiate_spec(&mut s, axis);
        self.inverse(s)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let s = self.forward(x);
        (0..self.grid.dim)
            .map(|a| {
                let mut sa = s.clone();
                self.differentiate_spec(&mut sa, a);
                self.inverse(sa)
            })
            .collect()
    }

    pub fn divergence(&self, comps: &[&[f64]]) -> Vec<f64> {
        let mut acc = vec![Complex64::default(); self.len()];
        for (a, c) in comps.iter().enumerate() {
            let mut s = self.forward(c);
            self.differentiate_spec(&mut s, a);
            acc.iter_mut().zip(&s).for_each(|(x, y)| *x += y);
        }
        self.inverse(acc)
    }

    /// Largest `|xi . bhat(xi)|` relative to the largest `|bhat|`.
    pub fn divergence_residual(&self, comps: &[&[f64]]) -> f64 {
        let specs: Vec<Vec<Complex64>> = comps.iter().map(|c| self.forward(c)).collect();
        let mut worst_div = 0.0f64;
        let mut worst_amp = 0.0f64;
        for flat in 0..self.len() {
            let mut div = Complex64::default();
            for (a, s) in specs.iter().enumerate() {
                if !self.is_nyquist_axis(flat, a) {
                    div += s[flat] * self.xi(flat, a);
                }
                worst_amp = worst_amp.max(s[flat].norm());
            }
            worst_div = worst_div.max(div.norm());
        }
        if worst_amp == 0.0 {
            0.0
        } else {
            worst_div / worst_amp
        }
    }

    /// 2/3-rule: zero every mode with some `|m_a| > N/3`.
    pub fn dealias_spec(&self, spec: &mut [Complex64]) {
        let cut = self.grid.n() as f64 / 3.0;
        for (flat, c) in spec.iter_mut().enumerate() {
            if self.modes_of(flat).iter().any(|&m| (m.abs() as f64) > cut) {
                *c = Complex64::default();
            }
        }
    }

    pub fn dealias(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.forward(x);
        self.dealias_spec(&mut s);
        self.inverse(s)
    }

    /// Heat propagator `e^{-|xi|^2 t}` applied to one slice.
    pub fn heat(&self, x: &[f64], t: f64) -> Vec<f64> {
        if t == 0.0 {
            return x.to_vec();
        }
        self.apply_fn(x, |i| (-self.k2[i] * t).exp())
    }
}

/// Signed mode number of FFT index `i` on `n` points, in `[-n/2, n/2)`.
pub fn mode_number(i: usize, n: usize) -> i32 {
    if i < n / 2 {
        i as i32
    } else {
        i as i32 - n as i32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid2() -> GridSpec {
        GridSpec::new(2, 2.0 * PI, 16, 1.0, 1).unwrap()
    }

    #[test]
    fn roundtrip() {
        let g = grid2();
        let f = Fourier::new(&g);
        let x: Vec<f64> = (0..g.n_points()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = f.inverse(f.forward(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let g = grid2();
        let f = Fourier::new(&g);
        let x: Vec<f64> = (0..g.n_points())
            .map(|i| {
                let c = g.coords(i);
                (2.0 * c[0] + c[1]).sin()
            })
            .collect();
        let dx = f.derivative(&x, 0);
        for (i, v) in dx.iter().enumerate() {
            let c = g.coords(i);
            assert!((v - 2.0 * (2.0 * c[0] + c[1]).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn three_d_roundtrip_and_modes() {
        let g = GridSpec::new(3, 1.0, 8, 1.0, 1).unwrap();
        let f = Fourier::new(&g);
        let x: Vec<f64> = (0..g.n_points()).map(|i| ((i * 7 % 11) as f64).cos()).collect();
        let y = f.inverse(f.forward(&x));
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-13));
        let flat = g.flatten(&[1, 7, 4]);
        assert_eq!(f.modes_of(flat), &[1, -1, -4]);
        assert!(f.is_nyquist(flat));
        assert_eq!(f.modes_of(f.conjugate_index(flat)), &[-1, 1, -4]);
    }
}
