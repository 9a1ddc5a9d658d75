use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{sample_along, simulate_ensemble, EnsembleConfig, InitialCondition, PathEnsemble};
use super::interp::{apply_in_time, cubic_stencil, linear_stencil};
use crate::error::{Error, Result};
use crate::fields::{mollify, MollifierSpec};
use crate::grid::{Field, GridSpec, VectorField};
use crate::pde::{backward_kolmogorov, bessel_time_norm, check_supercritical, fokker_planck};
use crate::report::{ratio, EstimateReport};
use crate::rng::NoiseSeed;
use crate::stats::mean_stderr;

/// Paths per simulated batch; bounds memory for large ensembles.
const BATCH: usize = 20_000;

fn batches(cfg: &EnsembleConfig) -> impl Iterator<Item = EnsembleConfig> + '_ {
    (0..cfg.n_paths)
        .step_by(BATCH)
        .map(move |start| cfg.batch(cfg.path_offset + start, BATCH.min(cfg.n_paths - start)))
}

/// Trapezoid weights for steps `from..=to` of width `dt`.
fn trapezoid(samples: &[f64], from: usize, to: usize, dt: f64) -> f64 {
    if to == from {
        return 0.0;
    }
    let inner: f64 = samples[from + 1..to].iter().sum();
    dt * (inner + 0.5 * (samples[from] + samples[to]))
}

/// L² gaps between drift integrals of successive mollification levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyTable {
    pub levels: Vec<u32>,
    pub finest: u32,
    /// `(n, n', ||int_0^T (b_n - b_n')(s, X_s) ds||_{L^2(Omega)})` for every pair.
    pub gaps: Vec<(u32, u32, f64)>,
    /// Gaps between neighbouring levels, in level order.
    pub consecutive: Vec<f64>,
    /// Whether the neighbouring gaps strictly decrease.
    pub decreasing: bool,
}

/// Simulates `X^{n*}` under the finest mollification and measures how the
/// integrals of coarser mollifications along it approach one another.
pub fn cauchy_in_n(
    b: &VectorField,
    levels: &[u32],
    finest: u32,
    init: &InitialCondition,
    cfg: &EnsembleConfig,
    seed: NoiseSeed,
) -> Result<CauchyTable> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] > w[1]) || levels.iter().any(|n| *n > finest) {
        return Err(Error::config(format!(
            "levels {levels:?} must be non-empty, sorted and at most {finest}"
        )));
    }
    let drifts: Vec<VectorField> = levels
        .iter()
        .map(|&n| mollify(b, &MollifierSpec::new(n)))
        .collect::<Result<_>>()?;
    let top = mollify(b, &MollifierSpec::new(finest))?;
    let d = b.dim();
    let nl = levels.len();
    let mut sq = vec![0.0; nl * nl];
    for batch in batches(cfg) {
        let ens = simulate_ensemble(&top, init, &batch, seed)?;
        // per path: integral of every level's drift, all components
        let integrals: Vec<Vec<f64>> = (0..ens.n_paths())
            .into_par_iter()
            .map(|p| {
                let mut acc = vec![0.0; nl * d];
                for k in 0..ens.n_steps() {
                    let x = ens.position(p, k);
                    let st = linear_stencil(&ens.grid, x);
                    for (l, bn) in drifts.iter().enumerate() {
                        for a in 0..d {
                            acc[l * d + a] += apply_in_time(&st, bn.component(a), ens.time(k)) * ens.dt();
                        }
                    }
                }
                acc
            })
            .collect();
        for acc in &integrals {
            for i in 0..nl {
                for j in i + 1..nl {
                    let s: f64 = (0..d).map(|a| (acc[i * d + a] - acc[j * d + a]).powi(2)).sum();
                    sq[i * nl + j] += s;
                }
            }
        }
    }
    let m = cfg.n_paths as f64;
    let mut gaps = Vec::new();
    for i in 0..nl {
        for j in i + 1..nl {
            gaps.push((levels[i], levels[j], (sq[i * nl + j] / m).sqrt()));
        }
    }
    let consecutive: Vec<f64> = (0..nl.saturating_sub(1))
        .map(|i| (sq[i * nl + i + 1] / m).sqrt())
        .collect();
    let decreasing = consecutive.windows(2).all(|w| w[1] < w[0]);
    Ok(CauchyTable {
        levels: levels.to_vec(),
        finest,
        gaps,
        consecutive,
        decreasing,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovConfig {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    /// Must run to the grid horizon and use an even stride, so that the
    /// half-step ensemble shares its Brownian paths.
    pub ensemble: EnsembleConfig,
    pub seed: NoiseSeed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovLevel {
    /// Mollification level; `None` uses the drift as given.
    pub level: Option<u32>,
    /// Monte-Carlo `E |int_0^T f(s, X_s) ds|^2` at the finer time step.
    pub mc: f64,
    pub mc_stderr: f64,
    /// Change of the Monte-Carlo value under halving the step.
    pub mc_budget: f64,
    /// `-2 int_0^T <f u_n, rho_n> ds` at twice the grid's time resolution.
    pub pde: f64,
    /// Change of the PDE value under halving the slice spacing.
    pub pde_budget: f64,
    pub tolerance: f64,
    pub agree: bool,
    /// `mc / (||f||^2 ||rho_0||_2)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovReport {
    pub levels: Vec<KrylovLevel>,
    pub f_norm: f64,
    pub rho0_norm: f64,
    /// Largest over smallest ratio across levels.
    pub uniformity: f64,
    pub report: EstimateReport,
}

fn retime(f: &Field, grid: &GridSpec) -> Result<Field> {
    if f.is_static() {
        return Field::from_data(grid, 1, f.data().to_vec(), f.label.clone());
    }
    let slices = (0..=grid.time_steps).map(|k| f.at_time(grid.time_of(k))).collect();
    Field::from_slices(grid, slices, f.label.clone())
}

fn retime_vector(b: &VectorField, grid: &GridSpec) -> Result<VectorField> {
    let comps = b.components().iter().map(|c| retime(c, grid)).collect::<Result<_>>()?;
    VectorField::new(comps, b.divergence_free)
}

/// `-2 int_0^T <f u, rho> ds` by the trapezoid rule on the slices, with `u`
/// the backward solution with forcing `f` and `rho` the forward density.
/// The sign turns `u` into the conditional expectation of the remaining
/// integral.
fn pde_second_moment(b: &VectorField, f: &Field, rho0: &Field) -> Result<f64> {
    let grid = f.grid();
    let u = backward_kolmogorov(b, f, grid.time_horizon)?;
    let rho = fokker_planck(b, rho0)?;
    let vol = grid.cell_volume();
    let inner: Vec<f64> = (0..=grid.time_steps)
        .map(|k| {
            let fk = f.slice_or_static(k);
            u.slice(k)
                .iter()
                .zip(rho.slice(k))
                .zip(fk)
                .map(|((u, r), f)| f * u * r)
                .sum::<f64>()
                * vol
        })
        .collect();
    let dt = grid.slice_dt();
    Ok(-2.0 * trapezoid(&inner, 0, grid.time_steps, dt))
}

fn mc_second_moment(
    b: &VectorField,
    f: &Field,
    rho0: &Field,
    cfg: &EnsembleConfig,
    seed: NoiseSeed,
) -> Result<Vec<f64>> {
    let init = InitialCondition::Density(rho0);
    let mut out = Vec::with_capacity(cfg.n_paths);
    for batch in batches(cfg) {
        let ens = simulate_ensemble(b, &init, &batch, seed)?;
        let samples = sample_along(&ens, f)?;
        let n = ens.n_steps() + 1;
        out.extend(
            samples
                .chunks(n)
                .map(|row| trapezoid(row, 0, n - 1, ens.dt()).powi(2)),
        );
    }
    Ok(out)
}

/// Compares the Monte-Carlo second moment of `int_0^T f(s, X^n_s) ds` with
/// the PDE identity at each mollification level, and the ratio to
/// `||f||^2_{L^q H^alpha_p} ||rho_0||_2` across levels.
pub fn krylov_check(
    b: &VectorField,
    levels: &[u32],
    f: &Field,
    rho0: &Field,
    cfg: &KrylovConfig,
) -> Result<KrylovReport> {
    let grid = f.grid();
    check_supercritical(grid.dim, cfg.alpha, cfg.p, cfg.q)?;
    let ens_cfg = cfg.ensemble;
    if (ens_cfg.t_end() - grid.time_horizon).abs() > 1e-9 * grid.time_horizon {
        return Err(Error::config("Krylov ensemble must run to the grid horizon"));
    }
    let half = ens_cfg.refined(2)?;
    let fine_grid = grid.with_time(grid.time_horizon, 2 * grid.time_steps)?;
    let f_fine = retime(f, &fine_grid)?;
    let rho0_fine = retime(rho0, &fine_grid)?;
    let f_norm = bessel_time_norm(f, cfg.alpha, cfg.p, cfg.q);
    let rho0_norm = rho0.lp_norm(0, 2.0);

    let drifts: Vec<(Option<u32>, VectorField)> = if levels.is_empty() {
        vec![(None, b.clone())]
    } else {
        levels
            .iter()
            .map(|&n| Ok((Some(n), mollify(b, &MollifierSpec::new(n))?)))
            .collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for (level, bn) in &drifts {
        let coarse = mc_second_moment(bn, f, rho0, &ens_cfg, cfg.seed)?;
        let fine = mc_second_moment(bn, f, rho0, &half, cfg.seed)?;
        let (mc, mc_stderr) = mean_stderr(&fine);
        let mc_budget = (mean_stderr(&coarse).0 - mc).abs();
        let pde_coarse = pde_second_moment(bn, f, rho0)?;
        let pde = pde_second_moment(&retime_vector(bn, &fine_grid)?, &f_fine, &rho0_fine)?;
        let pde_budget = (pde - pde_coarse).abs();
        let tolerance = 3.0 * mc_stderr + mc_budget + pde_budget;
        rows.push(KrylovLevel {
            level: *level,
            mc,
            mc_stderr,
            mc_budget,
            pde,
            pde_budget,
            tolerance,
            agree: (mc - pde).abs() <= tolerance,
            ratio: ratio(mc, f_norm * f_norm * rho0_norm),
        });
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.ratio), hi.max(r.ratio)));
    let uniformity = if hi == 0.0 { 1.0 } else { hi / lo };
    let all_agree = rows.iter().all(|r| r.agree);
    let report = EstimateReport::new(
        "krylov uniformity across levels",
        uniformity,
        2.0,
        all_agree && uniformity <= 2.0,
    );
    Ok(KrylovReport {
        levels: rows,
        f_norm,
        rho0_norm,
        uniformity,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    /// `(name, mean, stderr)` of `(M_t - M_s) g(X_s)` per dictionary element.
    pub entries: Vec<(String, f64, f64)>,
    /// Largest `|mean| / stderr`.
    pub defect: f64,
    pub pass: bool,
}

/// Constant plus `cos` and `sin` of four low modes.
fn dictionary(grid: &GridSpec) -> Vec<(String, Box<dyn Fn(&[f64]) -> f64 + Sync>)> {
    let d = grid.dim;
    let k = grid.k_unit();
    let modes: Vec<Vec<f64>> = if d == 1 {
        (1..=4).map(|m| vec![m as f64]).collect()
    } else {
        let mode = |m0: f64, m1: f64| {
            let mut m = vec![0.0; d];
            m[0] = m0;
            m[1] = m1;
            m
        };
        vec![mode(1.0, 0.0), mode(0.0, 1.0), mode(1.0, 1.0), mode(1.0, -1.0)]
    };
    let mut out: Vec<(String, Box<dyn Fn(&[f64]) -> f64 + Sync>)> = vec![("1".into(), Box::new(|_| 1.0))];
    for m in modes {
        let label = format!("{m:?}");
        let phase = move |x: &[f64]| k * m.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let p2 = phase.clone();
        out.push((format!("cos {label}"), Box::new(move |x| phase(x).cos())));
        out.push((format!("sin {label}"), Box::new(move |x| p2(x).sin())));
    }
    out
}

/// Correlations of the increment `M_t - M_s` of
/// `M_r = u(r, X_r) - u(0, X_0) - int_0^r f(X) dr'` with bounded functions of
/// `X_s`, where `u` solves the backward equation with forcing `f` and
/// `u(t) = 0`. `s` and `t` must be time nodes of both the grid and the
/// ensemble; `ens` should have been simulated with drift `b`.
pub fn martingale_defect(
    ens: &PathEnsemble,
    b: &VectorField,
    f: &Field,
    s: f64,
    t: f64,
) -> Result<MartingaleReport> {
    let grid = f.grid();
    ens.grid.check_same_space(grid)?;
    let node = |x: f64, step: f64| {
        let k = (x / step).round();
        ((k * step - x).abs() <= 1e-9 * step.max(x.abs())).then_some(k as usize)
    };
    let (Some(ks), Some(kt)) = (node(s, ens.dt()), node(t, ens.dt())) else {
        return Err(Error::config("s and t must be ensemble time nodes"));
    };
    if !(s < t) || kt > ens.n_steps() || node(s, grid.slice_dt()).is_none() || node(t, grid.slice_dt()).is_none() {
        return Err(Error::config(format!("need grid nodes 0 <= s < t <= T, got s={s}, t={t}")));
    }
    let u = backward_kolmogorov(b, f, t)?;
    let samples = sample_along(ens, f)?;
    let n = ens.n_steps() + 1;
    let increments: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let xs = ens.position(p, ks);
            let us = apply_in_time(&cubic_stencil(grid, xs), &u, s);
            // u(t, .) = 0
            -us - trapezoid(&samples[p * n..(p + 1) * n], ks, kt, ens.dt())
        })
        .collect();
    let mut entries = Vec::new();
    let mut defect = 0.0f64;
    for (name, g) in dictionary(grid) {
        let v: Vec<f64> = increments
            .iter()
            .enumerate()
            .map(|(p, m)| m * g(ens.position(p, ks)))
            .collect();
        let (mean, se) = mean_stderr(&v);
        let z = if mean == 0.0 { 0.0 } else { mean.abs() / se };
        defect = defect.max(z);
        entries.push((name, mean, se));
    }
    Ok(MartingaleReport {
        entries,
        defect,
        pass: defect <= 3.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungReport {
    /// `sum_k g(X_{t_k}) (A^f_{t_{k+1}} - A^f_{t_k})` on the coarse steps.
    pub lhs: Vec<f64>,
    /// `A^{g f}_T` with the fine steps.
    pub rhs: Vec<f64>,
    /// `||lhs - rhs||_{L^2(Omega)}`.
    pub gap: f64,
    pub coarse_dt: f64,
    pub g_sup: f64,
    /// Largest grid difference quotient of `g`.
    pub g_lipschitz: f64,
}

fn lipschitz(g: &Field) -> f64 {
    let grid = g.grid();
    let n = grid.n();
    let h = grid.cell_width();
    let mut idx = vec![0usize; grid.dim];
    let mut worst = 0.0f64;
    for k in 0..g.n_slices() {
        let s = g.slice(k);
        for i in 0..grid.n_points() {
            grid.unflatten(i, &mut idx);
            for a in 0..grid.dim {
                let mut j = idx.clone();
                j[a] = (j[a] + 1) % n;
                worst = worst.max((s[grid.flatten(&j)] - s[i]).abs() / h);
            }
        }
    }
    worst
}

/// Riemann-Stieltjes sum of `g` against the increments of `A^f`, with `g`
/// frozen over blocks of `stride` ensemble steps, compared with `A^{g f}`.
pub fn young_substitute(ens: &PathEnsemble, g: &Field, f: &Field, stride: usize) -> Result<YoungReport> {
    if stride == 0 || ens.n_steps() % stride != 0 {
        return Err(Error::config(format!(
            "stride {stride} must divide the {} ensemble steps",
            ens.n_steps()
        )));
    }
    let gs = sample_along(ens, g)?;
    let fs = sample_along(ens, f)?;
    let n = ens.n_steps() + 1;
    let dt = ens.dt();
    let (lhs, rhs): (Vec<f64>, Vec<f64>) = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let gr = &gs[p * n..(p + 1) * n];
            let fr = &fs[p * n..(p + 1) * n];
            let (mut l, mut r) = (0.0, 0.0);
            for block in 0..ens.n_steps() / stride {
                let start = block * stride;
                let mut inc = 0.0;
                let mut both = 0.0;
                for i in start..start + stride {
                    inc += fr[i] * dt;
                    both += gr[i] * fr[i] * dt;
                }
                l += gr[start] * inc;
                r += both;
            }
            (l, r)
        })
        .unzip();
    let sq: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).collect();
    Ok(YoungReport {
        gap: mean_stderr(&sq).0.sqrt(),
        lhs,
        rhs,
        coarse_dt: dt * stride as f64,
        g_sup: g.max_abs(),
        g_lipschitz: lipschitz(g),
    })
}
