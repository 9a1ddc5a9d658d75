use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::PathEnsemble;
use super::interp::{apply_in_time, cubic_stencil};
use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{Field, VectorField};
use crate::pde::{gradient_bound_check, picard_kolmogorov, PicardConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZvonkinReport {
    pub lambda: f64,
    /// Picard iterations per component.
    pub iterations: Vec<usize>,
    /// Largest `sup |grad u_i|` over the components.
    pub gradient: f64,
    /// `sup |grad Phi|` in the operator norm.
    pub grad_phi: f64,
    /// `sup |grad Phi^{-1}|`, from Newton inversion of grid points.
    pub grad_phi_inv: f64,
    /// Largest Newton residual `|Phi(x) - y|` after inversion.
    pub newton_residual: f64,
    /// Extreme singular values of `sqrt(2) grad Phi` over the grid.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// No two grid points map closer than half a cell, at every slice.
    pub injective: bool,
}

impl ZvonkinReport {
    /// `grad Phi` and its inverse bounded by 4, singular values of
    /// `sqrt(2) grad Phi` within `[1/8, 8]`.
    pub fn admissible(&self) -> bool {
        self.grad_phi <= 4.0
            && self.grad_phi_inv <= 4.0
            && self.sigma_min >= 0.125
            && self.sigma_max <= 8.0
            && self.injective
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZvonkinTransform {
    /// `Phi(t, x) - x`, i.e. the backward solution `u(t, x)` per component.
    pub displacement: VectorField,
    /// `Y_t = Phi(t, X_t)`.
    pub y: PathEnsemble,
    pub report: ZvonkinReport,
}

fn reversed(f: &Field) -> Result<Field> {
    if f.is_static() {
        return Ok(f.clone());
    }
    let slices = (0..f.n_slices()).rev().map(|k| f.slice(k).to_vec()).collect();
    Field::from_slices(f.grid(), slices, f.label.clone())
}

/// Singular values of a `d x d` matrix, `d <= 3`, from the eigenvalues of
/// `J^T J` by cyclic Jacobi rotations.
fn singular_values(j: &[[f64; 3]; 3], d: usize) -> (f64, f64) {
    let mut a = [[0.0; 3]; 3];
    for r in 0..d {
        for c in 0..d {
            a[r][c] = (0..d).map(|k| j[k][r] * j[k][c]).sum();
        }
    }
    for _ in 0..30 {
        let off: f64 = (0..d).flat_map(|r| (0..d).filter(move |c| *c != r).map(move |c| (r, c))).map(|(r, c)| a[r][c].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let eig = (0..d).map(|i| a[i][i].max(0.0).sqrt());
    eig.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn solve(j: &[[f64; 3]; 3], rhs: &[f64], d: usize) -> Option<[f64; 3]> {
    // Gaussian elimination with partial pivoting
    let mut m = *j;
    let mut b = [0.0; 3];
    b[..d].copy_from_slice(&rhs[..d]);
    for col in 0..d {
        let piv = (col..d).max_by(|x, y| m[*x][col].abs().total_cmp(&m[*y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..d {
            let f = m[r][col] / m[col][col];
            for c in col..d {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Some(x)
}

/// Component-wise data for one slice: `u_i` and `d_a u_i`.
struct SliceData {
    u: Vec<Vec<f64>>,
    grad: Vec<Vec<Vec<f64>>>,
}

impl SliceData {
    fn jacobian(&self, i: usize, d: usize) -> [[f64; 3]; 3] {
        let mut j = [[0.0; 3]; 3];
        for r in 0..d {
            for c in 0..d {
                j[r][c] = self.grad[r][c][i] + if r == c { 1.0 } else { 0.0 };
            }
        }
        j
    }
}

/// Builds `Phi(t, x) = x + u(t, x)` from one Picard solve per drift
/// component of `du/dt + Laplace u + b·grad u - lambda u + b = 0`,
/// `u(T) = 0`, and maps every path of `ens` through it.
pub fn zvonkin_transform(b: &VectorField, cfg: &PicardConfig, ens: &PathEnsemble) -> Result<ZvonkinTransform> {
    let grid = b.grid();
    ens.grid.check_same_space(grid)?;
    let d = grid.dim;
    if d > 3 {
        return Err(Error::config("Zvonkin transform supports d <= 3"));
    }
    let horizon = grid.time_horizon;
    // the forward Picard solver runs in reversed time s = T - t
    let b_rev = VectorField::new(b.components().iter().map(reversed).collect::<Result<_>>()?, b.divergence_free)?;
    let mut comps = Vec::with_capacity(d);
    let mut iterations = Vec::with_capacity(d);
    let mut gradient = 0.0f64;
    for a in 0..d {
        let sol = picard_kolmogorov(&b_rev, b_rev.component(a), cfg)?;
        gradient = gradient.max(gradient_bound_check(&sol.u));
        iterations.push(sol.iterations);
        let mut u = reversed(&sol.u)?;
        u.label = format!("u{a}");
        comps.push(u);
    }
    let displacement = VectorField::new(comps, false)?;

    let fourier = Fourier::new(grid);
    let n_slices = displacement.n_slices();
    let slices: Vec<SliceData> = (0..n_slices)
        .map(|k| {
            let u: Vec<Vec<f64>> = (0..d).map(|a| displacement.component(a).slice(k).to_vec()).collect();
            let grad = u.iter().map(|c| fourier.gradient(c)).collect();
            SliceData { u, grad }
        })
        .collect();

    let h = grid.cell_width();
    let side = grid.side_length;
    let per_slice: Vec<(f64, f64, f64, f64, f64, bool)> = slices
        .par_iter()
        .map(|s| {
            let mut grad_phi = 0.0f64;
            let mut s_lo = f64::INFINITY;
            let mut s_hi = 0.0f64;
            let mut inv = 0.0f64;
            let mut resid = 0.0f64;
            let mut images = Vec::with_capacity(grid.n_points());
            for i in 0..grid.n_points() {
                let x = grid.coords(i);
                let (lo, hi) = singular_values(&s.jacobian(i, d), d);
                grad_phi = grad_phi.max(hi);
                s_lo = s_lo.min(std::f64::consts::SQRT_2 * lo);
                s_hi = s_hi.max(std::f64::consts::SQRT_2 * hi);
                let y: Vec<f64> = (0..d).map(|a| (x[a] + s.u[a][i]).rem_euclid(side)).collect();
                images.push(y);

                // invert Phi at the grid point x by Newton from x itself
                let mut z = x.clone();
                let mut r = f64::INFINITY;
                for _ in 0..30 {
                    let st = cubic_stencil(grid, &z);
                    let mut jac = [[0.0; 3]; 3];
                    let mut f = [0.0; 3];
                    for a in 0..d {
                        f[a] = z[a] + st.apply(&s.u[a]) - x[a];
                        for c in 0..d {
                            jac[a][c] = st.apply(&s.grad[a][c]) + if a == c { 1.0 } else { 0.0 };
                        }
                    }
                    r = f[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r < 1e-12 * side {
                        break;
                    }
                    match solve(&jac, &f, d) {
                        Some(step) => (0..d).for_each(|a| z[a] -= step[a]),
                        None => break,
                    }
                }
                let st = cubic_stencil(grid, &z);
                let mut jac = [[0.0; 3]; 3];
                for a in 0..d {
                    for c in 0..d {
                        jac[a][c] = st.apply(&s.grad[a][c]) + if a == c { 1.0 } else { 0.0 };
                    }
                }
                let (lo, _) = singular_values(&jac, d);
                inv = inv.max(1.0 / lo);
                resid = resid.max(r);
            }
            let injective = injective(&images, d, 0.5 * h, side);
            (grad_phi, s_lo, s_hi, inv, resid, injective)
        })
        .collect();
    let fold = |f: fn(&(f64, f64, f64, f64, f64, bool)) -> f64, init: f64, op: fn(f64, f64) -> f64| {
        per_slice.iter().map(f).fold(init, op)
    };
    let report = ZvonkinReport {
        lambda: cfg.lambda,
        iterations,
        gradient,
        grad_phi: fold(|s| s.0, 0.0, f64::max),
        sigma_min: fold(|s| s.1, f64::INFINITY, f64::min),
        sigma_max: fold(|s| s.2, 0.0, f64::max),
        grad_phi_inv: fold(|s| s.3, 0.0, f64::max),
        newton_residual: fold(|s| s.4, 0.0, f64::max),
        injective: per_slice.iter().all(|s| s.5),
    };

    let y = transform_paths(ens, &displacement, horizon);
    Ok(ZvonkinTransform {
        displacement,
        y,
        report,
    })
}

/// Whether all images are at least `radius` apart on the torus, by hashing
/// them into cells of width `radius` and comparing neighbouring cells.
fn injective(images: &[Vec<f64>], d: usize, radius: f64, side: f64) -> bool {
    let wrap = |v: f64| v - side * (v / side).round();
    let n_cells = ((side / radius).floor() as i64).max(1);
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, y) in images.iter().enumerate() {
        let key = y.iter().map(|v| ((v / radius).floor() as i64).rem_euclid(n_cells)).collect();
        buckets.entry(key).or_default().push(i);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut c| {
            (0..d)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .collect();
    for (key, members) in &buckets {
        for off in &offsets {
            let nb: Vec<i64> = key.iter().zip(off).map(|(k, o)| (k + o).rem_euclid(n_cells)).collect();
            let Some(others) = buckets.get(&nb) else { continue };
            for &i in members {
                for &j in others {
                    if i == j {
                        continue;
                    }
                    let dist2: f64 = (0..d).map(|a| wrap(images[i][a] - images[j][a]).powi(2)).sum();
                    if dist2 < radius * radius {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn transform_paths(ens: &PathEnsemble, displacement: &VectorField, horizon: f64) -> PathEnsemble {
    let d = ens.dim();
    if displacement.components().iter().all(|c| c.max_abs() == 0.0) {
        return ens.with_positions(ens.positions().to_vec(), format!("Phi({})", ens.drift_label));
    }
    let n = ens.n_steps() + 1;
    let mut out = vec![0.0; ens.positions().len()];
    out.par_chunks_mut(n * d).enumerate().for_each(|(p, row)| {
        for k in 0..n {
            let x = ens.position(p, k);
            let t = ens.time(k).min(horizon);
            let st = cubic_stencil(&ens.grid, x);
            for a in 0..d {
                row[k * d + a] = x[a] + apply_in_time(&st, displacement.component(a), t);
            }
        }
    });
    ens.with_positions(out, format!("Phi({})", ens.drift_label))
}

#[cfg(test)]
mod tests {
    use super::super::ensemble::{simulate_ensemble, EnsembleConfig, InitialCondition};
    use super::*;
    use crate::grid::GridSpec;
    use crate::rng::NoiseSeed;
    use std::f64::consts::PI;

    fn cfg(lambda: f64) -> PicardConfig {
        PicardConfig::new(lambda, -0.1, f64::INFINITY, f64::INFINITY)
    }

    fn grid() -> GridSpec {
        GridSpec::new(2, 2.0 * PI, 32, 0.5, 10).unwrap()
    }

    fn ensemble(b: &VectorField) -> PathEnsemble {
        let cfg = EnsembleConfig::over(50, 0.5, 20);
        simulate_ensemble(b, &InitialCondition::Point(vec![1.0, 2.0]), &cfg, NoiseSeed::new(8)).unwrap()
    }

    #[test]
    fn zero_drift_is_the_identity() {
        let g = grid();
        let b = VectorField::zeros(&g, 1, "b");
        let ens = ensemble(&b);
        let z = zvonkin_transform(&b, &cfg(1.0), &ens).unwrap();
        assert_eq!(z.y.positions(), ens.positions());
        assert_eq!(z.report.grad_phi, 1.0);
        assert_eq!(z.report.gradient, 0.0);
        assert!((z.report.sigma_min - 2f64.sqrt()).abs() < 1e-15);
        assert!(z.report.injective && z.report.admissible());
    }

    #[test]
    fn smooth_drift_gives_admissible_map() {
        let g = grid();
        let b = VectorField::new(
            vec![
                Field::from_fn(&g, "b0", |x| x[1].sin()),
                Field::from_fn(&g, "b1", |x| x[0].cos()),
            ],
            true,
        )
        .unwrap();
        let ens = ensemble(&b);
        let z = zvonkin_transform(&b, &cfg(16.0), &ens).unwrap();
        let r = &z.report;
        assert!(r.gradient <= 0.5, "{r:?}");
        assert!(r.admissible(), "{r:?}");
        assert!(r.newton_residual < 1e-9);
        // |I + grad u| <= 1 + |grad u|_F <= 1 + sqrt(d) max_i |grad u_i|
        assert!(r.grad_phi > 1.0 && r.grad_phi <= 1.0 + 2f64.sqrt() * r.gradient + 1e-12);
        // terminal displacement vanishes
        let last = ens.n_steps();
        for p in 0..ens.n_paths() {
            let (x, y) = (ens.position(p, last), z.y.position(p, last));
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn displacement_solves_the_backward_equation_for_a_constant_drift() {
        // b = (c, 0) constant: u_0(t) = c (1 - e^{-lambda (T - t)}) / lambda
        let g = grid();
        let c = 0.7;
        let lambda = 4.0;
        let b = VectorField::new(vec![Field::from_fn(&g, "b0", |_| c), Field::zeros(&g, 1, "b1")], true).unwrap();
        let ens = ensemble(&b);
        let z = zvonkin_transform(&b, &cfg(lambda), &ens).unwrap();
        let u0 = z.displacement.component(0);
        for k in 0..=g.time_steps {
            let t = g.time_of(k);
            let exact = c * (1.0 - (-lambda * (0.5 - t)).exp()) / lambda;
            assert!((u0.slice(k)[5] - exact).abs() < 1e-6, "{k}");
        }
    }

    #[test]
    fn singular_values_of_known_matrices() {
        let j = [[3.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.0]];
        let (lo, hi) = singular_values(&j, 2);
        assert!((lo - 0.5).abs() < 1e-14 && (hi - 3.0).abs() < 1e-14);
        let shear = [[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        let (lo, hi) = singular_values(&shear, 2);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((hi - golden).abs() < 1e-12 && (lo - 1.0 / golden).abs() < 1e-12);
    }

    #[test]
    fn injectivity_detects_a_fold() {
        let folded = vec![vec![0.0, 0.0], vec![0.01, 0.0], vec![1.0, 1.0]];
        assert!(!injective(&folded, 2, 0.1, 2.0));
        // neighbours across the periodic seam
        let seam = vec![vec![0.0, 0.5], vec![1.99, 0.5]];
        assert!(!injective(&seam, 2, 0.1, 2.0));
        let spread = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.15, 0.0]];
        assert!(injective(&spread, 2, 0.1, 2.0));
    }
}
