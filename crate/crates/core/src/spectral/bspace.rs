use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::grid::VectorField;
use crate::rng::{normal_pair, NoiseSeed};

/// Random real test function with unit `H^1_2` norm and every `|m_a| <= cut`.
/// Draws come from stream `key` of `seed`, visiting modes in flat order.
pub(crate) fn dictionary_element(fourier: &Fourier, seed: &NoiseSeed, key: u64, cut: i32) -> Vec<f64> {
    let np = fourier.len();
    let mut rng = seed.rng(key);
    let mut spec = vec![Complex64::default(); np];
    for flat in 0..np {
        let m = fourier.modes_of(flat);
        if m.iter().any(|v| v.abs() > cut) || !is_canonical(m) {
            continue;
        }
        let (a, b) = normal_pair(&mut rng);
        spec[flat] = Complex64::new(a, b);
        spec[fourier.conjugate_index(flat)] = Complex64::new(a, -b);
    }
    let x = fourier.inverse(spec);
    let norm = h1_norm(fourier, &x);
    x.into_iter().map(|v| v / norm).collect()
}

/// Representative of the pair `{m, -m}`: first nonzero component positive.
pub(crate) fn is_canonical(m: &[i32]) -> bool {
    m.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

fn sobolev_norm(fourier: &Fourier, x: &[f64], s: f64) -> f64 {
    let spec = fourier.forward(x);
    let np = fourier.len() as f64;
    let vol = fourier.grid().volume();
    // Parseval: int |f|^2 = (L^d / N^{2d}) sum |fhat|^2
    let sum: f64 = spec
        .iter()
        .zip(fourier.k2())
        .map(|(c, k2)| (1.0 + k2).powf(s) * c.norm_sqr())
        .sum();
    (sum * vol / (np * np)).sqrt()
}

fn h1_norm(fourier: &Fourier, x: &[f64]) -> f64 {
    sobolev_norm(fourier, x, 1.0)
}

/// Lower estimate of the `ℬ` norm of `b`: the largest ratio
/// `||b . grad phi||_{H^{-1}_2} / ||phi||_{H^1_2}` over a seeded dictionary of
/// band-limited test functions with frequencies up to a third of Nyquist.
///
/// Element `i` depends only on `(seed, i)`, so growing the dictionary never
/// lowers the estimate. The product `b . grad phi` is 2/3-dealiased.
pub fn b_space_norm_estimate(b: &VectorField, dictionary_size: usize, seed: NoiseSeed) -> Result<f64> {
    if dictionary_size < 1 {
        return Err(Error::config("dictionary needs at least one element"));
    }
    if !b.is_static() {
        return Err(Error::config("b must be a single time slice"));
    }
    let fourier = Fourier::new(b.grid());
    let cut = ((b.grid().n() / 2) as i32 / 3).max(1);
    let mut best = 0.0f64;
    for i in 0..dictionary_size {
        let phi = dictionary_element(&fourier, &seed, i as u64, cut);
        let grad = fourier.gradient(&phi);
        let mut prod = vec![0.0; phi.len()];
        for (a, g) in grad.iter().enumerate() {
            let ba = b.component(a).slice(0);
            prod.iter_mut()
                .zip(ba.iter().zip(g))
                .for_each(|(p, (x, y))| *p += x * y);
        }
        let prod = fourier.dealias(&prod);
        best = best.max(sobolev_norm(&fourier, &prod, -1.0));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, GridSpec};
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(2, 2.0 * PI, 32, 1.0, 1).unwrap()
    }

    #[test]
    fn zero_drift_gives_zero() {
        let g = grid();
        let b = VectorField::zeros(&g, 1, "b");
        assert_eq!(b_space_norm_estimate(&b, 5, NoiseSeed::new(1)).unwrap(), 0.0);
        assert!(b_space_norm_estimate(&b, 0, NoiseSeed::new(1)).is_err());
    }

    #[test]
    fn dictionary_elements_have_unit_h1_norm() {
        let g = grid();
        let fourier = Fourier::new(&g);
        let x = dictionary_element(&fourier, &NoiseSeed::new(3), 0, 5);
        assert!((h1_norm(&fourier, &x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_of_antisymmetric_matrix_is_bounded_by_its_sup() {
        // a = [[0, a12], [-a12, 0]], b_i = sum_j d_j a_ij
        let g = grid();
        let fourier = Fourier::new(&g);
        let a12 = Field::from_fn(&g, "a12", |x| 0.7 + 0.3 * (2.0 * x[0] + x[1]).sin());
        let grad = fourier.gradient(a12.slice(0));
        let b = VectorField::new(
            vec![
                Field::from_data(&g, 1, grad[1].clone(), "b1").unwrap(),
                Field::from_data(&g, 1, grad[0].iter().map(|v| -v).collect(), "b2").unwrap(),
            ],
            true,
        )
        .unwrap();
        let est = b_space_norm_estimate(&b, 40, NoiseSeed::new(11)).unwrap();
        assert!(est > 0.0);
        assert!(est <= a12.max_abs() * (1.0 + 1e-9), "{est} vs {}", a12.max_abs());
    }

    #[test]
    fn estimate_grows_with_dictionary() {
        let g = grid();
        let b = VectorField::new(
            vec![
                Field::from_fn(&g, "b1", |x| (x[1]).sin()),
                Field::from_fn(&g, "b2", |x| (x[0]).cos()),
            ],
            true,
        )
        .unwrap();
        let seed = NoiseSeed::new(5);
        let mut prev = 0.0;
        for size in [1, 2, 5, 10, 20] {
            let e = b_space_norm_estimate(&b, size, seed).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }
}
