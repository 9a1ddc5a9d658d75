//! Bony paraproducts built from precomputed block stacks.
//!
//! Block stacks are indexed `b = j + 1`, so `stack[0]` is `R_{-1}`.
//! All products are pointwise on the grid; callers keep inputs band-limited
//! (or dealias afterwards) so the products stay resolvable.

use rustfft::num_complex::Complex64;

use super::DyadicPartition;
use crate::error::Result;
use crate::fourier::Fourier;
use crate::grid::{Field, VectorField};

/// `sum_k S_{k-1} f * R_k g` from block stacks.
pub fn para_low_blocks(f: &[Vec<f64>], g: &[Vec<f64>]) -> Vec<f64> {
    let np = g[0].len();
    let mut out = vec![0.0; np];
    let mut low = vec![0.0; np];
    for k in 2..g.len() {
        // low = S_{k-1} f in stack indices: blocks 0..=k-2
        low.iter_mut().zip(&f[k - 2]).for_each(|(a, b)| *a += b);
        out.iter_mut()
            .zip(low.iter().zip(&g[k]))
            .for_each(|(o, (a, b))| *o += a * b);
    }
    out
}

/// `sum_{|i-j|<=1} R_i f * R_j g` from block stacks. Off-diagonal pairs are
/// added as `f_i g_j + f_j g_i`, which makes the result bitwise symmetric.
pub fn para_resonant_blocks(f: &[Vec<f64>], g: &[Vec<f64>]) -> Vec<f64> {
    let np = g[0].len();
    let n = f.len();
    let mut out = vec![0.0; np];
    for i in 0..n {
        for (o, (a, b)) in out.iter_mut().zip(f[i].iter().zip(&g[i])) {
            *o += a * b;
        }
        if i + 1 < n {
            for (k, o) in out.iter_mut().enumerate() {
                *o += f[i][k] * g[i + 1][k] + f[i + 1][k] * g[i][k];
            }
        }
    }
    out
}

fn low_plus_resonant(f: &[Vec<f64>], g: &[Vec<f64>]) -> Vec<f64> {
    let mut a = para_low_blocks(f, g);
    let b = para_resonant_blocks(f, g);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    a
}

fn single(f: &Field) -> Result<&[f64]> {
    super::single_slice(f)
}

/// `f ≺ g`.
pub fn paraproduct_low(f: &Field, g: &Field, partition: &DyadicPartition) -> Result<Field> {
    f.grid().check_same_space(g.grid())?;
    f.grid().check_same_space(partition.grid())?;
    let fourier = Fourier::new(f.grid());
    let fb = partition.blocks(&fourier, single(f)?);
    let gb = partition.blocks(&fourier, single(g)?);
    Field::from_data(
        f.grid(),
        1,
        para_low_blocks(&fb, &gb),
        format!("{}≺{}", f.label, g.label),
    )
}

/// `f ∘ g`.
pub fn paraproduct_resonant(f: &Field, g: &Field, partition: &DyadicPartition) -> Result<Field> {
    f.grid().check_same_space(g.grid())?;
    f.grid().check_same_space(partition.grid())?;
    let fourier = Fourier::new(f.grid());
    let fb = partition.blocks(&fourier, single(f)?);
    let gb = partition.blocks(&fourier, single(g)?);
    Field::from_data(
        f.grid(),
        1,
        para_resonant_blocks(&fb, &gb),
        format!("{}∘{}", f.label, g.label),
    )
}

/// Block stacks of a drift slice, reused across many `u`.
pub(crate) struct DriftBlocks {
    comps: Vec<Vec<Vec<f64>>>,
    div: Option<Vec<Vec<f64>>>,
}

impl DriftBlocks {
    /// `with_div = false` skips `div b`, whose correction term is then omitted.
    pub(crate) fn new(
        b: &[&[f64]],
        partition: &DyadicPartition,
        fourier: &Fourier,
        with_div: bool,
    ) -> Self {
        let np = fourier.len();
        let mut div_spec = vec![Complex64::default(); np];
        let mut comps = Vec::with_capacity(b.len());
        for (axis, bi) in b.iter().enumerate() {
            let bi_spec = fourier.forward(bi);
            comps.push(partition.blocks_of_spectrum(fourier, &bi_spec));
            if with_div {
                let mut db = bi_spec;
                fourier.differentiate_spec(&mut db, axis);
                div_spec.iter_mut().zip(&db).for_each(|(a, c)| *a += c);
            }
        }
        let div = with_div.then(|| partition.blocks_of_spectrum(fourier, &div_spec));
        DriftBlocks { comps, div }
    }

    /// `(b ⊙ ∇u, div b ≼ u)` with
    /// `b ⊙ ∇u = sum_i [ d_i(b_i ≼ u) + d_i u ≺ b_i ]`.
    pub(crate) fn decompose(
        &self,
        u: &[f64],
        partition: &DyadicPartition,
        fourier: &Fourier,
    ) -> (Vec<f64>, Option<Vec<f64>>) {
        let np = u.len();
        let u_spec = fourier.forward(u);
        let ub = partition.blocks_of_spectrum(fourier, &u_spec);
        let mut first_spec = vec![Complex64::default(); np];
        let mut first_direct = vec![0.0; np];
        for (axis, bb) in self.comps.iter().enumerate() {
            let mut s = fourier.forward(&low_plus_resonant(bb, &ub));
            fourier.differentiate_spec(&mut s, axis);
            first_spec.iter_mut().zip(&s).for_each(|(a, c)| *a += c);

            let mut du = u_spec.clone();
            fourier.differentiate_spec(&mut du, axis);
            let dub = partition.blocks_of_spectrum(fourier, &du);
            let hl = para_low_blocks(&dub, bb);
            first_direct.iter_mut().zip(&hl).for_each(|(a, c)| *a += c);
        }
        let mut first = fourier.inverse(first_spec);
        first.iter_mut().zip(&first_direct).for_each(|(a, c)| *a += c);
        let second = self.div.as_ref().map(|divb| low_plus_resonant(divb, &ub));
        (first, second)
    }
}

/// `(b ⊙ ∇u, div b ≼ u)`; their difference is `b · ∇u`.
pub fn drift_gradient_decomp(
    b: &VectorField,
    u: &Field,
    partition: &DyadicPartition,
) -> Result<(Field, Field)> {
    b.grid().check_same_space(u.grid())?;
    u.grid().check_same_space(partition.grid())?;
    let comps: Vec<&[f64]> = b
        .components()
        .iter()
        .map(single)
        .collect::<Result<_>>()?;
    let fourier = Fourier::new(u.grid());
    let blocks = DriftBlocks::new(&comps, partition, &fourier, true);
    let (first, second) = blocks.decompose(single(u)?, partition, &fourier);
    let second = second.unwrap_or_default();
    Ok((
        Field::from_data(u.grid(), 1, first, "b⊙∇u")?,
        Field::from_data(u.grid(), 1, second, "div b≼u")?,
    ))
}
