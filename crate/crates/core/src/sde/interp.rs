//! Periodic grid interpolation of fields at arbitrary points.

use crate::grid::{time_bracket, Field, GridSpec};

/// Corner indices and weights of a tensor stencil; at most `4^3` entries.
pub(crate) struct Stencil {
    pub idx: [usize; 64],
    pub w: [f64; 64],
    pub len: usize,
    /// Cell fractions per axis; a two-point stencil is applied as nested
    /// lerps, which reproduces constants exactly.
    frac: Option<[f64; 3]>,
}

fn cell_position(grid: &GridSpec, x: f64) -> (usize, f64) {
    let n = grid.n();
    let s = x.rem_euclid(grid.side_length) / grid.cell_width();
    let f = s.floor();
    ((f as usize) % n, s - f)
}

fn tensor(grid: &GridSpec, x: &[f64], width: usize, weights: impl Fn(f64, &mut [f64; 4])) -> Stencil {
    let d = grid.dim;
    let n = grid.n();
    // offset of the first stencil point relative to the enclosing cell
    let shift = if width == 2 { 0 } else { n - 1 };
    let mut base = [0usize; 3];
    let mut axis_w = [[0.0; 4]; 3];
    let mut frac = [0.0; 3];
    for a in 0..d {
        let (i, f) = cell_position(grid, x[a]);
        base[a] = i + shift;
        frac[a] = f;
        weights(f, &mut axis_w[a]);
    }
    let mut st = Stencil {
        idx: [0; 64],
        w: [0.0; 64],
        len: width.pow(d as u32),
        frac: (width == 2).then_some(frac),
    };
    for c in 0..st.len {
        let mut flat = 0;
        let mut wt = 1.0;
        let mut rem = c;
        for a in 0..d {
            let o = rem % width;
            rem /= width;
            flat = flat * n + (base[a] + o) % n;
            wt *= axis_w[a][o];
        }
        st.idx[c] = flat;
        st.w[c] = wt;
    }
    st
}

/// Multilinear stencil of the `2^d` surrounding grid points.
pub(crate) fn linear_stencil(grid: &GridSpec, x: &[f64]) -> Stencil {
    tensor(grid, x, 2, |f, w| {
        w[0] = 1.0 - f;
        w[1] = f;
    })
}

/// Four-point Lagrange stencil per axis, fourth-order accurate.
pub(crate) fn cubic_stencil(grid: &GridSpec, x: &[f64]) -> Stencil {
    tensor(grid, x, 4, |f, w| {
        w[0] = -f * (f - 1.0) * (f - 2.0) / 6.0;
        w[1] = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
        w[2] = -(f + 1.0) * f * (f - 2.0) / 2.0;
        w[3] = (f + 1.0) * f * (f - 1.0) / 6.0;
    })
}

impl Stencil {
    pub(crate) fn apply(&self, values: &[f64]) -> f64 {
        let Some(frac) = self.frac else {
            return (0..self.len).map(|c| self.w[c] * values[self.idx[c]]).sum();
        };
        // bit a of the corner index is the offset on axis a; fold the top axis first
        let mut v = [0.0; 8];
        for c in 0..self.len {
            v[c] = values[self.idx[c]];
        }
        let mut len = self.len;
        let mut axis = self.len.trailing_zeros() as usize;
        while len > 1 {
            axis -= 1;
            let f = frac[axis];
            for c in 0..len / 2 {
                v[c] = v[c] + f * (v[c + len / 2] - v[c]);
            }
            len /= 2;
        }
        v[0]
    }
}

/// Stencil applied to a field at time `t`, linear between time slices.
pub(crate) fn apply_in_time(st: &Stencil, f: &Field, t: f64) -> f64 {
    if f.is_static() {
        return st.apply(f.slice(0));
    }
    let (k, w) = time_bracket(f.grid(), t);
    let a = st.apply(f.slice(k));
    if w == 0.0 {
        a
    } else {
        (1.0 - w) * a + w * st.apply(f.slice(k + 1))
    }
}

/// Multilinear in space, linear in time.
pub fn interpolate(f: &Field, t: f64, x: &[f64]) -> f64 {
    apply_in_time(&linear_stencil(f.grid(), x), f, t)
}

/// Tensor cubic in space, linear in time.
pub fn interpolate_cubic(f: &Field, t: f64, x: &[f64]) -> f64 {
    apply_in_time(&cubic_stencil(f.grid(), x), f, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reproduces_grid_values_and_wraps() {
        let g = GridSpec::new(2, 2.0 * PI, 16, 1.0, 2).unwrap();
        let f = Field::from_fn(&g, "f", |x| x[0].sin() * (2.0 * x[1]).cos());
        for i in [0, 17, 100, 255] {
            let x = g.coords(i);
            assert!((interpolate(&f, 0.0, &x) - f.data()[i]).abs() < 1e-14);
            assert!((interpolate_cubic(&f, 0.0, &x) - f.data()[i]).abs() < 1e-14);
            let shifted = [x[0] + 2.0 * PI, x[1] - 4.0 * PI];
            assert!((interpolate(&f, 0.0, &shifted) - f.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_for_multilinear_and_cubic_polynomials_inside_a_cell() {
        let g = GridSpec::new(1, 10.0, 16, 1.0, 1).unwrap();
        let lin = Field::from_fn(&g, "l", |x| 2.0 * x[0] + 1.0);
        let cub = Field::from_fn(&g, "c", |x| x[0].powi(3) - x[0]);
        let x = [4.3];
        assert!((interpolate(&lin, 0.0, &x) - 9.6).abs() < 1e-12);
        assert!((interpolate_cubic(&cub, 0.0, &x) - (4.3f64.powi(3) - 4.3)).abs() < 1e-10);
    }

    #[test]
    fn cubic_error_is_fourth_order() {
        let err = |n: usize| {
            let g = GridSpec::new(2, 2.0 * PI, n, 1.0, 1).unwrap();
            let f = Field::from_fn(&g, "f", |x| (x[0] + 2.0 * x[1]).sin());
            (0..200)
                .map(|i| {
                    let x = [0.0371 * i as f64, 0.0913 * i as f64];
                    (interpolate_cubic(&f, 0.0, &x) - (x[0] + 2.0 * x[1]).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(64) / err(128);
        assert!(ratio > 13.0, "{ratio}");
    }

    #[test]
    fn linear_stencil_reproduces_constants_bitwise() {
        let g = GridSpec::new(3, 1.0, 8, 1.0, 1).unwrap();
        let c = 0.1 + 0.2;
        let f = Field::from_fn(&g, "c", |_| c);
        for i in 0..50 {
            let x = [0.013 * i as f64, 0.37 + 0.021 * i as f64, 0.9 - 0.017 * i as f64];
            assert_eq!(interpolate(&f, 0.0, &x), c);
        }
    }

    #[test]
    fn linear_in_time() {
        let g = GridSpec::new(1, 1.0, 8, 1.0, 4).unwrap();
        let f = Field::from_fn_t(&g, "f", |t, _| 3.0 * t);
        assert!((interpolate(&f, 0.3, &[0.2]) - 0.9).abs() < 1e-14);
        assert!((interpolate(&f, 2.0, &[0.2]) - 3.0).abs() < 1e-14);
    }
}
