use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::{Field, GridSpec, VectorField};

/// `phi_n(x) = n^d phi(n x)` with `phi` proportional to `exp(-1/(1-|x|^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub scale_n: u32,
}

impl MollifierSpec {
    pub fn new(scale_n: u32) -> Self {
        MollifierSpec { scale_n }
    }

    /// The kernel support (diameter `2/n`) must span at least four cells and
    /// its radius must stay below half the torus.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let n = self.scale_n as f64;
        if self.scale_n == 0 {
            return Err(Error::config("mollifier scale must be at least 1"));
        }
        if 2.0 / n < 4.0 * grid.cell_width() {
            return Err(Error::config(format!(
                "mollifier scale {} too fine for cell width {:.3e} (max {})",
                self.scale_n,
                grid.cell_width(),
                (grid.n() as f64 / (2.0 * grid.side_length)).floor()
            )));
        }
        if 1.0 / n >= 0.5 * grid.side_length {
            return Err(Error::config(format!(
                "mollifier scale {} wider than half the torus",
                self.scale_n
            )));
        }
        Ok(())
    }
}

fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Kernel samples at periodic (minimum-image) distances from the origin,
/// normalized so that the rectangle-rule integral is 1.
pub fn mollifier_kernel(grid: &GridSpec, spec: &MollifierSpec) -> Result<Vec<f64>> {
    spec.validate(grid)?;
    let n = spec.scale_n as f64;
    let l = grid.side_length;
    let mut k: Vec<f64> = (0..grid.n_points())
        .map(|i| {
            let r2: f64 = grid
                .coords(i)
                .iter()
                .map(|&x| {
                    let y = if x > 0.5 * l { x - l } else { x };
                    (n * y) * (n * y)
                })
                .sum();
            bump(r2)
        })
        .collect();
    let total = k.iter().sum::<f64>() * grid.cell_volume();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Real Fourier multiplier of the periodic convolution with the kernel. The
/// sampled kernel is even, so its transform is real; the round-off imaginary
/// part is dropped.
pub(crate) fn mollifier_multiplier(grid: &GridSpec, spec: &MollifierSpec) -> Result<Vec<f64>> {
    let fourier = Fourier::new(grid);
    let k = mollifier_kernel(grid, spec)?;
    let vol = grid.cell_volume();
    Ok(fourier.forward(&k).iter().map(|c| c.re * vol).collect())
}

fn convolve(f: &Field, mult: &[f64], fourier: &Fourier) -> Result<Field> {
    let slices = (0..f.n_slices())
        .map(|k| fourier.apply_real(f.slice(k), mult))
        .collect();
    Field::from_slices(f.grid(), slices, f.label.clone())
}

pub fn mollify_field(f: &Field, spec: &MollifierSpec) -> Result<Field> {
    let mult = mollifier_multiplier(f.grid(), spec)?;
    convolve(f, &mult, &Fourier::new(f.grid()))
}

/// `b_n = b * phi_n` componentwise and slice by slice.
pub fn mollify(b: &VectorField, spec: &MollifierSpec) -> Result<VectorField> {
    let mult = mollifier_multiplier(b.grid(), spec)?;
    let fourier = Fourier::new(b.grid());
    let comps = b
        .components()
        .iter()
        .map(|c| convolve(c, &mult, &fourier))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps, b.divergence_free)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{synth_gaussian_field, SpectralMeasureSpec};
    use crate::rng::NoiseSeed;
    use crate::spectral::{besov_norm, build_partition, BesovIndex};

    fn grid() -> GridSpec {
        GridSpec::new(2, 1.0, 128, 1.0, 1).unwrap()
    }

    #[test]
    fn kernel_is_a_probability_density() {
        let g = grid();
        for n in [4, 16, 32] {
            let k = mollifier_kernel(&g, &MollifierSpec::new(n)).unwrap();
            assert!(k.iter().all(|v| *v >= 0.0));
            let mass = k.iter().sum::<f64>() * g.cell_volume();
            assert!((mass - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn scale_limits() {
        let g = grid();
        assert!(MollifierSpec::new(32).validate(&g).is_ok());
        assert!(MollifierSpec::new(64).validate(&g).is_ok());
        assert!(MollifierSpec::new(65).validate(&g).is_err());
        assert!(MollifierSpec::new(2).validate(&g).is_err());
        assert!(MollifierSpec::new(0).validate(&g).is_err());
    }

    #[test]
    fn constant_and_mean_preserved() {
        let g = grid();
        let c = Field::from_fn(&g, "c", |_| 1.25);
        let m = mollify_field(&c, &MollifierSpec::new(16)).unwrap();
        assert!(m.data().iter().all(|v| (v - 1.25).abs() < 1e-12));
        let b = synth_gaussian_field(&g, &SpectralMeasureSpec::new(2, 1.0), NoiseSeed::new(3)).unwrap();
        let f = b.component(0).map(|v| v + 0.5);
        let fm = mollify_field(&f, &MollifierSpec::new(8)).unwrap();
        assert!((fm.mean(0) - f.mean(0)).abs() <= 1e-12);
    }

    #[test]
    fn smooth_field_barely_moves_at_finest_scale() {
        let g = grid();
        let tau = 2.0 * std::f64::consts::PI;
        let f = Field::from_fn(&g, "s", |x| (tau * x[0]).sin() + (tau * x[1]).cos());
        let m = mollify_field(&f, &MollifierSpec::new(64)).unwrap();
        let err = m.lin_comb(1.0, &f, -1.0).unwrap().max_abs() / f.max_abs();
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn divergence_free_flag_and_residual_survive() {
        let g = grid();
        let fourier = Fourier::new(&g);
        let b = synth_gaussian_field(&g, &SpectralMeasureSpec::new(2, 1.5), NoiseSeed::new(5)).unwrap();
        let bn = mollify(&b, &MollifierSpec::new(8)).unwrap();
        assert!(bn.divergence_free);
        let comps: Vec<&[f64]> = bn.components().iter().map(|c| c.slice(0)).collect();
        assert!(fourier.divergence_residual(&comps) <= 1e-10);
    }

    #[test]
    fn besov_norm_does_not_grow() {
        let g = grid();
        let p = build_partition(&g).unwrap();
        let b = synth_gaussian_field(&g, &SpectralMeasureSpec::new(2, 1.0), NoiseSeed::new(8)).unwrap();
        for n in [4, 8, 16, 32] {
            let bn = mollify(&b, &MollifierSpec::new(n)).unwrap();
            for idx in [
                BesovIndex::new(-0.5, 2.0, f64::INFINITY).unwrap(),
                BesovIndex::new(0.0, f64::INFINITY, 2.0).unwrap(),
            ] {
                let before = besov_norm(b.component(0), idx, &p).unwrap();
                let after = besov_norm(bn.component(0), idx, &p).unwrap();
                assert!(after <= before * (1.0 + 1e-8), "n={n}: {after} > {before}");
            }
        }
    }

    #[test]
    fn mollification_error_rate() {
        // b in B^{-1/2}_{2,inf}; the error in B^{-1}_{2,inf} decays like n^{-1/2}
        let g = GridSpec::new(2, 1.0, 256, 1.0, 1).unwrap();
        let p = build_partition(&g).unwrap();
        let mut spec = SpectralMeasureSpec::new(2, 1.0);
        spec.divergence_free = false;
        let b = synth_gaussian_field(&g, &spec, NoiseSeed::new(1)).unwrap();
        let idx = BesovIndex::new(-1.0, 2.0, f64::INFINITY).unwrap();
        let (mut xs, mut ys) = (vec![], vec![]);
        for n in [4u32, 8, 16, 32, 64] {
            let bn = mollify_field(b.component(0), &MollifierSpec::new(n)).unwrap();
            let diff = bn.lin_comb(1.0, b.component(0), -1.0).unwrap();
            xs.push((n as f64).log2());
            ys.push(besov_norm(&diff, idx, &p).unwrap().log2());
        }
        let slope = crate::stats::linear_fit(&xs, &ys).slope;
        assert!((slope + 0.5).abs() <= 0.3, "slope {slope}");
    }
}
