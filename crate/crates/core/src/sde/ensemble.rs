use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{interp, Drift, GridDrift};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, VectorField};
use crate::rng::{fill_normal, uniform, NoiseSeed};

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub n_steps: usize,
    /// Brownian draws summed into each step. Two ensembles with equal
    /// `dt / stride` share their Brownian paths, so `dt` can be refined
    /// without changing the noise.
    #[serde(default = "one")]
    pub stride: usize,
    /// Global index of the first path; batches with consecutive offsets
    /// reproduce one large ensemble.
    #[serde(default)]
    pub path_offset: usize,
}

impl EnsembleConfig {
    pub fn new(n_paths: usize, dt: f64, n_steps: usize) -> Self {
        EnsembleConfig {
            n_paths,
            dt,
            n_steps,
            stride: 1,
            path_offset: 0,
        }
    }

    /// `n_steps` equal steps up to `t_end`.
    pub fn over(n_paths: usize, t_end: f64, n_steps: usize) -> Self {
        Self::new(n_paths, t_end / n_steps as f64, n_steps)
    }

    /// Same Brownian paths with `factor` times more steps; needs `stride`
    /// divisible by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.stride % factor != 0 {
            return Err(Error::config(format!(
                "cannot refine stride {} by {factor}",
                self.stride
            )));
        }
        Ok(EnsembleConfig {
            dt: self.dt / factor as f64,
            n_steps: self.n_steps * factor,
            stride: self.stride / factor,
            ..*self
        })
    }

    pub fn batch(&self, path_offset: usize, n_paths: usize) -> Self {
        EnsembleConfig {
            path_offset,
            n_paths,
            ..*self
        }
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 || self.stride == 0 {
            return Err(Error::config("ensemble needs paths, steps and a positive stride"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("time step {} must be positive", self.dt)));
        }
        if self.t_end() > grid.time_horizon * (1.0 + 1e-9) {
            return Err(Error::config(format!(
                "ensemble runs to {} past the grid horizon {}",
                self.t_end(),
                grid.time_horizon
            )));
        }
        Ok(())
    }
}

pub enum InitialCondition<'a> {
    Point(Vec<f64>),
    /// Cells drawn by inverse CDF in flat grid order, then a uniform jitter
    /// inside the cell centred on the grid point.
    Density(&'a Field),
}

/// Paths stored path-major: `positions[((p * (n_steps + 1)) + k) * d + a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub grid: GridSpec,
    pub config: EnsembleConfig,
    pub brownian_seed: NoiseSeed,
    pub drift_label: String,
    positions: Vec<f64>,
}

impl PathEnsemble {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn n_paths(&self) -> usize {
        self.config.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.config.dt
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let len = (self.config.n_steps + 1) * self.dim();
        &self.positions[p * len..(p + 1) * len]
    }

    pub fn position(&self, p: usize, k: usize) -> &[f64] {
        let d = self.dim();
        &self.path(p)[k * d..(k + 1) * d]
    }

    /// Brownian increment `sqrt(2) (W_{t_{k+1}} - W_{t_k})` of local path `p`,
    /// regenerated from the counter-based stream.
    pub fn brownian_increment(&self, p: usize, k: usize, out: &mut [f64]) {
        let mut rng = self.brownian_seed.rng((self.config.path_offset + p) as u64);
        rng.set_word_pos((k * self.config.stride * words_per_draw(self.dim())) as u128);
        let mut z = [0.0; 4];
        brownian_step(&mut rng, self.config.dt, self.config.stride, &mut z[..self.dim()]);
        out.copy_from_slice(&z[..self.dim()]);
    }

    /// Same paths with new positions, e.g. after a change of variables.
    pub(crate) fn with_positions(&self, positions: Vec<f64>, label: String) -> PathEnsemble {
        debug_assert_eq!(positions.len(), self.positions.len());
        PathEnsemble {
            positions,
            drift_label: label,
            ..self.clone()
        }
    }
}

/// 32-bit words consumed by one normal draw of `d` coordinates.
fn words_per_draw(d: usize) -> usize {
    4 * d.div_ceil(2)
}

fn brownian_step(rng: &mut rand_chacha::ChaCha8Rng, dt: f64, stride: usize, out: &mut [f64]) {
    let scale = (2.0 * dt / stride as f64).sqrt();
    out.fill(0.0);
    let mut z = [0.0; 4];
    for _ in 0..stride {
        fill_normal(rng, &mut z[..out.len()]);
        out.iter_mut().zip(&z).for_each(|(o, z)| *o += scale * z);
    }
}

fn cumulative_density(rho: &Field) -> Result<Vec<f64>> {
    if !rho.is_static() {
        return Err(Error::config("initial density must be a single slice"));
    }
    let mut acc = 0.0;
    let cdf: Vec<f64> = rho
        .data()
        .iter()
        .map(|v| {
            acc += v.max(0.0);
            acc
        })
        .collect();
    if !(acc > 0.0) {
        return Err(Error::config("initial density has no positive mass"));
    }
    Ok(cdf)
}

pub fn simulate_ensemble(
    b: &VectorField,
    init: &InitialCondition,
    cfg: &EnsembleConfig,
    seed: NoiseSeed,
) -> Result<PathEnsemble> {
    simulate_with(&GridDrift(b), b.grid(), init, cfg, seed)
}

/// Euler-Maruyama `X_{k+1} = X_k + b(t_k, X_k) dt + sqrt(2) dW_k`, one
/// counter-addressed random stream per global path index.
pub fn simulate_with(
    drift: &dyn Drift,
    grid: &GridSpec,
    init: &InitialCondition,
    cfg: &EnsembleConfig,
    seed: NoiseSeed,
) -> Result<PathEnsemble> {
    cfg.validate(grid)?;
    let d = grid.dim;
    if drift.dim() != d {
        return Err(Error::config(format!("drift of dimension {} on a {d}-d grid", drift.dim())));
    }
    let cdf = match init {
        InitialCondition::Point(x) if x.len() != d => {
            return Err(Error::config(format!("initial point has {} coordinates", x.len())))
        }
        InitialCondition::Point(x) if x.iter().any(|v| !v.is_finite()) => {
            return Err(Error::config("initial point must be finite"))
        }
        InitialCondition::Point(_) => None,
        InitialCondition::Density(rho) => {
            grid.check_same_space(rho.grid())?;
            Some(cumulative_density(rho)?)
        }
    };
    let init_seed = seed.child_named("initial");
    let per_path = (cfg.n_steps + 1) * d;
    let mut positions = vec![0.0; cfg.n_paths * per_path];
    let failures: Vec<Error> = positions
        .par_chunks_mut(per_path)
        .enumerate()
        .filter_map(|(p, out)| {
            let global = (cfg.path_offset + p) as u64;
            match (&init, &cdf) {
                (InitialCondition::Point(x), _) => out[..d].copy_from_slice(x),
                (_, Some(cdf)) => {
                    let mut rng = init_seed.rng(global);
                    let total = cdf[cdf.len() - 1];
                    let u = uniform(&mut rng) * total;
                    let cell = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
                    let h = grid.cell_width();
                    for (o, c) in out[..d].iter_mut().zip(grid.coords(cell)) {
                        *o = c + (uniform(&mut rng) - 0.5) * h;
                    }
                }
                _ => unreachable!(),
            }
            let mut rng = seed.rng(global);
            let mut b = [0.0; 4];
            let mut dw = [0.0; 4];
            for k in 0..cfg.n_steps {
                let (done, rest) = out.split_at_mut((k + 1) * d);
                let x = &done[k * d..];
                drift.eval(k as f64 * cfg.dt, x, &mut b[..d]);
                if b[..d].iter().any(|v| !v.is_finite()) {
                    return Some(Error::Simulation {
                        path: cfg.path_offset + p,
                        step: k,
                        detail: format!("drift {:?} at {x:?}", &b[..d]),
                    });
                }
                brownian_step(&mut rng, cfg.dt, cfg.stride, &mut dw[..d]);
                for a in 0..d {
                    rest[a] = x[a] + b[a] * cfg.dt + dw[a];
                }
            }
            None
        })
        .collect();
    if let Some(e) = failures.into_iter().min_by_key(|e| match e {
        Error::Simulation { path, .. } => *path,
        _ => usize::MAX,
    }) {
        return Err(e);
    }
    Ok(PathEnsemble {
        grid: grid.clone(),
        config: *cfg,
        brownian_seed: seed,
        drift_label: drift.label(),
        positions,
    })
}

/// `A_t = int_0^t f(s, X_s) ds` per path, as a left-point Riemann sum on the
/// ensemble's steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveFunctional {
    pub n_steps: usize,
    pub integrand_label: String,
    values: Vec<f64>,
}

impl AdditiveFunctional {
    pub fn n_paths(&self) -> usize {
        self.values.len() / (self.n_steps + 1)
    }

    pub fn path(&self, p: usize) -> &[f64] {
        &self.values[p * (self.n_steps + 1)..(p + 1) * (self.n_steps + 1)]
    }

    pub fn value(&self, p: usize, k: usize) -> f64 {
        self.path(p)[k]
    }

    pub fn terminal(&self) -> Vec<f64> {
        (0..self.n_paths()).map(|p| self.value(p, self.n_steps)).collect()
    }
}

/// `f` sampled at every stored position of every path.
pub(crate) fn sample_along(ens: &PathEnsemble, f: &Field) -> Result<Vec<f64>> {
    ens.grid.check_same_space(f.grid())?;
    let n = ens.n_steps() + 1;
    let mut out = vec![0.0; ens.n_paths() * n];
    out.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        for (k, v) in row.iter_mut().enumerate() {
            *v = interp::interpolate(f, ens.time(k), ens.position(p, k));
        }
    });
    Ok(out)
}

pub fn additive_functional(ens: &PathEnsemble, f: &Field) -> Result<AdditiveFunctional> {
    let samples = sample_along(ens, f)?;
    let n = ens.n_steps() + 1;
    let dt = ens.dt();
    let mut values = vec![0.0; samples.len()];
    values
        .par_chunks_mut(n)
        .zip(samples.par_chunks(n))
        .for_each(|(a, s)| {
            for k in 1..n {
                a[k] = a[k - 1] + s[k - 1] * dt;
            }
        });
    Ok(AdditiveFunctional {
        n_steps: ens.n_steps(),
        integrand_label: f.label.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{ConstantDrift, ZeroDrift};
    use super::*;
    use crate::stats::mean_stderr;

    fn grid() -> GridSpec {
        GridSpec::new(2, 20.0, 16, 1.0, 4).unwrap()
    }

    #[test]
    fn brownian_second_moment() {
        let g = grid();
        let cfg = EnsembleConfig::over(100_000, 0.5, 10);
        let ens = simulate_with(&ZeroDrift(2), &g, &InitialCondition::Point(vec![0.0, 0.0]), &cfg, NoiseSeed::new(1)).unwrap();
        let r2: Vec<f64> = (0..ens.n_paths())
            .map(|p| ens.position(p, 10).iter().map(|v| v * v).sum())
            .collect();
        let (m, _) = mean_stderr(&r2);
        assert!((m / (4.0 * 0.5) - 1.0).abs() <= 0.03, "{m}");
    }

    #[test]
    fn constant_drift_shifts_the_mean() {
        let g = grid();
        let c = [0.7, -1.3];
        let (m_paths, t) = (20_000, 1.0);
        let cfg = EnsembleConfig::over(m_paths, t, 8);
        let ens = simulate_with(&ConstantDrift(c.to_vec()), &g, &InitialCondition::Point(vec![1.0, 1.0]), &cfg, NoiseSeed::new(2)).unwrap();
        for a in 0..2 {
            let xs: Vec<f64> = (0..m_paths).map(|p| ens.position(p, 8)[a] - 1.0).collect();
            let (m, _) = mean_stderr(&xs);
            assert!((m - c[a] * t).abs() <= 3.0 * (2.0 * t / m_paths as f64).sqrt());
        }
    }

    #[test]
    fn increments_have_variance_two_dt_and_replay() {
        let g = grid();
        let cfg = EnsembleConfig::new(10_000, 0.01, 3);
        let ens = simulate_with(&ZeroDrift(2), &g, &InitialCondition::Point(vec![0.0, 0.0]), &cfg, NoiseSeed::new(3)).unwrap();
        let mut inc = Vec::new();
        let mut dw = [0.0; 2];
        for p in 0..ens.n_paths() {
            ens.brownian_increment(p, 1, &mut dw);
            for a in 0..2 {
                assert_eq!(ens.position(p, 2)[a], ens.position(p, 1)[a] + dw[a]);
            }
            inc.extend_from_slice(&dw);
        }
        let var = crate::stats::variance(&inc);
        assert!((var / 0.02 - 1.0).abs() <= 0.05, "{var}");
    }

    #[test]
    fn quadratic_variation_converges_under_refinement() {
        let g = grid();
        let coarse = EnsembleConfig { stride: 4, ..EnsembleConfig::over(200, 1.0, 25) };
        let fine = coarse.refined(4).unwrap();
        let qv = |cfg: &EnsembleConfig| {
            let ens = simulate_with(&ZeroDrift(2), &g, &InitialCondition::Point(vec![0.0, 0.0]), cfg, NoiseSeed::new(4)).unwrap();
            let mut dw = [0.0; 2];
            let per_path: Vec<f64> = (0..ens.n_paths())
                .map(|p| {
                    (0..ens.n_steps())
                        .map(|k| {
                            ens.brownian_increment(p, k, &mut dw);
                            dw.iter().map(|v| v * v).sum::<f64>()
                        })
                        .sum()
                })
                .collect();
            mean_stderr(&per_path).0
        };
        // E QV = 2 d T exactly; the fine grid concentrates it
        assert!((qv(&fine) / 4.0 - 1.0).abs() <= 0.02);
        // same Brownian path: endpoints agree across refinements
        let a = simulate_with(&ZeroDrift(2), &g, &InitialCondition::Point(vec![0.0, 0.0]), &coarse, NoiseSeed::new(4)).unwrap();
        let b = simulate_with(&ZeroDrift(2), &g, &InitialCondition::Point(vec![0.0, 0.0]), &fine, NoiseSeed::new(4)).unwrap();
        for p in 0..10 {
            for a_ in 0..2 {
                assert!((a.position(p, 25)[a_] - b.position(p, 100)[a_]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn thread_count_and_batching_do_not_change_paths() {
        let g = grid();
        let b = VectorField::new(
            vec![
                Field::from_fn(&g, "b0", |x| (x[1] * 0.3).sin()),
                Field::from_fn(&g, "b1", |x| (x[0] * 0.3).cos()),
            ],
            true,
        )
        .unwrap();
        let cfg = EnsembleConfig::over(64, 1.0, 20);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_ensemble(&b, &InitialCondition::Point(vec![3.0, 3.0]), &cfg, NoiseSeed::new(5)).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        let tail = simulate_ensemble(&b, &InitialCondition::Point(vec![3.0, 3.0]), &cfg.batch(32, 32), NoiseSeed::new(5)).unwrap();
        assert_eq!(tail.path(0), one.path(32));
    }

    #[test]
    fn density_initialization_follows_the_density() {
        let g = GridSpec::new(1, 1.0, 16, 1.0, 1).unwrap();
        // all mass in the cell around x = 0.5
        let rho = Field::from_fn(&g, "rho", |x| if (x[0] - 0.5).abs() < 1e-9 { 16.0 } else { 0.0 });
        let cfg = EnsembleConfig::over(1000, 1e-6, 1);
        let ens = simulate_with(&ZeroDrift(1), &g, &InitialCondition::Density(&rho), &cfg, NoiseSeed::new(6)).unwrap();
        assert!((0..1000).all(|p| (ens.position(p, 0)[0] - 0.5).abs() <= 0.5 / 16.0));
        let again = simulate_with(&ZeroDrift(1), &g, &InitialCondition::Density(&rho), &cfg, NoiseSeed::new(6)).unwrap();
        assert_eq!(ens, again);
    }

    #[test]
    fn nan_drift_reports_the_path() {
        let g = grid();
        let cfg = EnsembleConfig::over(4, 1.0, 2);
        let r = simulate_with(&ConstantDrift(vec![f64::NAN, 0.0]), &g, &InitialCondition::Point(vec![0.0, 0.0]), &cfg, NoiseSeed::new(1));
        assert!(matches!(r, Err(Error::Simulation { path: 0, step: 0, .. })));
        let bad = EnsembleConfig::over(4, 2.0, 2);
        assert!(simulate_with(&ZeroDrift(2), &g, &InitialCondition::Point(vec![0.0, 0.0]), &bad, NoiseSeed::new(1)).is_err());
    }

    #[test]
    fn additive_functional_of_constants() {
        let g = grid();
        let cfg = EnsembleConfig::over(10, 1.0, 16);
        let ens = simulate_with(&ZeroDrift(2), &g, &InitialCondition::Point(vec![0.0, 0.0]), &cfg, NoiseSeed::new(7)).unwrap();
        let a = additive_functional(&ens, &Field::from_fn(&g, "one", |_| 1.0)).unwrap();
        let c = additive_functional(&ens, &Field::from_fn(&g, "c", |_| -2.5)).unwrap();
        for p in 0..10 {
            assert_eq!(a.value(p, 0), 0.0);
            for k in 0..=16 {
                assert!((a.value(p, k) - ens.time(k)).abs() <= 1e-14);
                assert!((c.value(p, k) + 2.5 * ens.time(k)).abs() <= 1e-13);
            }
        }
    }
}
