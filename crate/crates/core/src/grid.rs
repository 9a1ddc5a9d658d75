//! Periodic space-time grids and the sampled fields that live on them.
//!
//! Space is the torus `[0, L)^d` sampled at `N` points per side, stored in
//! row-major order (last axis fastest). Time runs over `[0, T]` in `n_t`
//! uniform steps; a time-dependent field stores one slice per time node
//! (`n_t + 1` slices), a static field stores a single slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub side_length: f64,
    pub points_per_side: usize,
    pub time_horizon: f64,
    pub time_steps: usize,
}

impl GridSpec {
    pub fn new(
        dim: usize,
        side_length: f64,
        points_per_side: usize,
        time_horizon: f64,
        time_steps: usize,
    ) -> Result<Self> {
        let grid = GridSpec {
            dim,
            side_length,
            points_per_side,
            time_horizon,
            time_steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 3 {
            return Err(Error::config(format!("dimension {} not in 1..=3", self.dim)));
        }
        if !(self.side_length.is_finite() && self.side_length > 0.0) {
            return Err(Error::config("side length must be positive"));
        }
        if self.points_per_side < 4 || !self.points_per_side.is_power_of_two() {
            return Err(Error::config(format!(
                "points per side {} must be a power of two >= 4",
                self.points_per_side
            )));
        }
        if !(self.time_horizon.is_finite() && self.time_horizon > 0.0) {
            return Err(Error::config("time horizon must be positive"));
        }
        if self.time_steps == 0 {
            return Err(Error::config("need at least one time step"));
        }
        Ok(())
    }

    /// Same spatial grid with a different time discretization.
    pub fn with_time(&self, time_horizon: f64, time_steps: usize) -> Result<Self> {
        GridSpec::new(
            self.dim,
            self.side_length,
            self.points_per_side,
            time_horizon,
            time_steps,
        )
    }

    pub fn n(&self) -> usize {
        self.points_per_side
    }

    pub fn n_points(&self) -> usize {
        self.points_per_side.pow(self.dim as u32)
    }

    pub fn cell_width(&self) -> f64 {
        self.side_length / self.points_per_side as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.side_length.powi(self.dim as i32)
    }

    /// Spacing between stored time slices.
    pub fn slice_dt(&self) -> f64 {
        self.time_horizon / self.time_steps as f64
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.time_horizon * k as f64 / self.time_steps as f64
    }

    /// Nyquist wavenumber `pi N / L`.
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * self.points_per_side as f64 / self.side_length
    }

    /// Fundamental wavenumber `2 pi / L`.
    pub fn k_unit(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.side_length
    }

    /// Largest usable dyadic index. Dyadic blocks are laid out on integer
    /// mode numbers (wavenumber in units of `2 pi / L`), where the Nyquist
    /// frequency is `N / 2`.
    pub fn j_max(&self) -> i32 {
        ((self.points_per_side / 2) as f64).log2().floor() as i32 - 1
    }

    /// Multi-index of flat position `flat`.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        let n = self.points_per_side;
        for a in (0..self.dim).rev() {
            out[a] = flat % n;
            flat /= n;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter()
            .fold(0usize, |acc, &i| acc * self.points_per_side + i)
    }

    /// Physical coordinates of grid point `flat`.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        self.unflatten(flat, &mut idx);
        let h = self.cell_width();
        idx.iter().map(|&i| i as f64 * h).collect()
    }

    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.dim == other.dim
            && self.points_per_side == other.points_per_side
            && self.side_length == other.side_length
    }

    pub(crate) fn check_same_space(&self, other: &GridSpec) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "d={} N={} L={} vs d={} N={} L={}",
                self.dim,
                self.points_per_side,
                self.side_length,
                other.dim,
                other.points_per_side,
                other.side_length
            )))
        }
    }
}

/// Scalar field sampled on a [`GridSpec`], one or `n_t + 1` time slices.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    data: Vec<f64>,
    n_slices: usize,
    pub label: String,
}

impl Field {
    pub fn zeros(grid: &GridSpec, n_slices: usize, label: impl Into<String>) -> Self {
        assert!(
            n_slices == 1 || n_slices == grid.time_steps + 1,
            "slice count must be 1 or n_t + 1"
        );
        Field {
            grid: grid.clone(),
            data: vec![0.0; n_slices * grid.n_points()],
            n_slices,
            label: label.into(),
        }
    }

    pub fn from_data(
        grid: &GridSpec,
        n_slices: usize,
        data: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if n_slices != 1 && n_slices != grid.time_steps + 1 {
            return Err(Error::config(format!(
                "{} slices on a grid with {} time steps",
                n_slices, grid.time_steps
            )));
        }
        if data.len() != n_slices * grid.n_points() {
            return Err(Error::Format(format!(
                "expected {} samples, got {}",
                n_slices * grid.n_points(),
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite sample at {bad}")));
        }
        Ok(Field {
            grid: grid.clone(),
            data,
            n_slices,
            label: label.into(),
        })
    }

    /// Static field from a function of position.
    pub fn from_fn(grid: &GridSpec, label: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.n_points()).map(|i| f(&grid.coords(i))).collect();
        Field {
            grid: grid.clone(),
            data,
            n_slices: 1,
            label: label.into(),
        }
    }

    /// Time-dependent field from a function of `(t, x)` on every time node.
    pub fn from_fn_t(
        grid: &GridSpec,
        label: impl Into<String>,
        f: impl Fn(f64, &[f64]) -> f64,
    ) -> Self {
        let np = grid.n_points();
        let coords: Vec<Vec<f64>> = (0..np).map(|i| grid.coords(i)).collect();
        let mut data = Vec::with_capacity((grid.time_steps + 1) * np);
        for k in 0..=grid.time_steps {
            let t = grid.time_of(k);
            data.extend(coords.iter().map(|x| f(t, x)));
        }
        Field {
            grid: grid.clone(),
            data,
            n_slices: grid.time_steps + 1,
            label: label.into(),
        }
    }

    pub fn from_slices(grid: &GridSpec, slices: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let n_slices = slices.len();
        let data = slices.into_iter().flatten().collect();
        Field::from_data(grid, n_slices, data, label)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn is_static(&self) -> bool {
        self.n_slices == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let np = self.grid.n_points();
        &self.data[k * np..(k + 1) * np]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let np = self.grid.n_points();
        &mut self.data[k * np..(k + 1) * np]
    }

    /// Slice `k`, or the only slice of a static field.
    pub fn slice_or_static(&self, k: usize) -> &[f64] {
        if self.is_static() {
            self.slice(0)
        } else {
            self.slice(k)
        }
    }

    /// Single-slice copy of time slice `k`.
    pub fn static_slice(&self, k: usize) -> Field {
        Field {
            grid: self.grid.clone(),
            data: self.slice(k).to_vec(),
            n_slices: 1,
            label: self.label.clone(),
        }
    }

    /// Replicate a static field across all time nodes.
    pub fn broadcast_in_time(&self) -> Field {
        if !self.is_static() {
            return self.clone();
        }
        let n = self.grid.time_steps + 1;
        let mut data = Vec::with_capacity(n * self.data.len());
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Field {
            grid: self.grid.clone(),
            data,
            n_slices: n,
            label: self.label.clone(),
        }
    }

    /// Values at time `t`, linearly interpolated between the two bracketing slices.
    pub fn at_time(&self, t: f64) -> Vec<f64> {
        if self.is_static() {
            return self.data.clone();
        }
        let (k, w) = time_bracket(&self.grid, t);
        if w == 0.0 {
            return self.slice(k).to_vec();
        }
        self.slice(k)
            .iter()
            .zip(self.slice(k + 1))
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// Pointwise `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.grid.check_same_space(&other.grid)?;
        if self.n_slices != other.n_slices {
            return Err(Error::GridMismatch("slice counts differ".into()));
        }
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(x, y)| *x = a * *x + b * y);
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Grid mean of slice `k`.
    pub fn mean(&self, k: usize) -> f64 {
        let s = self.slice(k);
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Rectangle-rule integral of slice `k`.
    pub fn integral(&self, k: usize) -> f64 {
        self.slice(k).iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Rectangle-rule `L^p` norm of slice `k`.
    pub fn lp_norm(&self, k: usize, p: f64) -> f64 {
        lp_norm(self.slice(k), p, self.grid.cell_volume())
    }
}

/// `(k, w)` with `t = (k + w) * dt`, `0 <= w < 1`, clamped into `[0, T]`.
pub(crate) fn time_bracket(grid: &GridSpec, t: f64) -> (usize, f64) {
    let s = (t / grid.slice_dt()).clamp(0.0, grid.time_steps as f64);
    let k = (s.floor() as usize).min(grid.time_steps);
    if k == grid.time_steps {
        return (k, 0.0);
    }
    (k, s - k as f64)
}

/// Rectangle-rule `L^p` norm with cell volume `vol`; `p = inf` is the grid max.
pub fn lp_norm(values: &[f64], p: f64, vol: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    if p == 2.0 {
        return (values.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();
    }
    if p == 1.0 {
        return values.iter().map(|v| v.abs()).sum::<f64>() * vol;
    }
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * vol).powf(1.0 / p)
}

/// `d` scalar components on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
    /// Set when the field was built in the range of the Leray projection.
    pub divergence_free: bool,
}

impl VectorField {
    pub fn new(components: Vec<Field>, divergence_free: bool) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::config("vector field needs components"))?;
        if components.len() != first.grid().dim {
            return Err(Error::config(format!(
                "{} components for dimension {}",
                components.len(),
                first.grid().dim
            )));
        }
        for c in &components[1..] {
            if c.grid() != first.grid() || c.n_slices() != first.n_slices() {
                return Err(Error::GridMismatch("components disagree on grid or slices".into()));
            }
        }
        Ok(VectorField {
            components,
            divergence_free,
        })
    }

    pub fn zeros(grid: &GridSpec, n_slices: usize, label: &str) -> Self {
        let components = (0..grid.dim)
            .map(|i| Field::zeros(grid, n_slices, format!("{label}[{i}]")))
            .collect();
        VectorField {
            components,
            divergence_free: true,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn n_slices(&self) -> usize {
        self.components[0].n_slices()
    }

    pub fn is_static(&self) -> bool {
        self.n_slices() == 1
    }

    pub fn component(&self, i: usize) -> &Field {
        &self.components[i]
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Field> {
        self.components
    }

    pub fn scaled(&self, c: f64) -> VectorField {
        VectorField {
            components: self.components.iter().map(|f| f.scaled(c)).collect(),
            divergence_free: self.divergence_free,
        }
    }

    pub fn static_slice(&self, k: usize) -> VectorField {
        VectorField {
            components: self.components.iter().map(|f| f.static_slice(k)).collect(),
            divergence_free: self.divergence_free,
        }
    }

    /// Largest pointwise Euclidean norm over all slices.
    pub fn max_norm(&self) -> f64 {
        let n = self.components[0].data().len();
        (0..n)
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c.data()[i] * c.data()[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(GridSpec::new(2, 1.0, 96, 1.0, 4).is_err());
        assert!(GridSpec::new(2, 1.0, 64, 1.0, 4).is_ok());
        assert!(GridSpec::new(2, -1.0, 64, 1.0, 4).is_err());
        assert!(GridSpec::new(2, 1.0, 64, 1.0, 0).is_err());
    }

    #[test]
    fn j_max_for_standard_grid() {
        let g = GridSpec::new(2, 2.0 * std::f64::consts::PI, 128, 1.0, 1).unwrap();
        assert_eq!(g.j_max(), 5);
        // matches floor(log2(pi N / L)) - 1 on the 2 pi torus
        assert_eq!(g.j_max(), g.k_max().log2().floor() as i32 - 1);
    }

    #[test]
    fn flatten_roundtrip() {
        let g = GridSpec::new(3, 1.0, 8, 1.0, 1).unwrap();
        let mut idx = [0; 3];
        for flat in [0, 1, 9, 100, 511] {
            g.unflatten(flat, &mut idx);
            assert_eq!(g.flatten(&idx), flat);
        }
    }

    #[test]
    fn time_interpolation_is_linear() {
        let g = GridSpec::new(1, 1.0, 4, 1.0, 2).unwrap();
        let f = Field::from_fn_t(&g, "t", |t, _| t);
        assert_eq!(f.at_time(0.25), vec![0.25; 4]);
        assert_eq!(f.at_time(1.0), vec![1.0; 4]);
        assert_eq!(f.at_time(2.0), vec![1.0; 4]);
    }

    #[test]
    fn lp_norm_of_constant() {
        let g = GridSpec::new(2, 2.0, 8, 1.0, 1).unwrap();
        let f = Field::from_fn(&g, "c", |_| 3.0);
        assert!((f.lp_norm(0, 2.0) - 6.0).abs() < 1e-12);
        assert!((f.lp_norm(0, 1.0) - 12.0).abs() < 1e-12);
        assert_eq!(f.lp_norm(0, f64::INFINITY), 3.0);
    }
}
