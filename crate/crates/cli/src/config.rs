//! Experiment configuration: TOML sections with `key = value` lines.
//!
//! Every table rejects unknown keys, and the index inequalities of the
//! chosen regime are checked at load.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use superdrift::fields::{
    mollify, she_environment, synth_gaussian_field, MollifierSpec, PointVortices, SpectralMeasureSpec,
};
use superdrift::io::read_vector_field;
use superdrift::pde::{check_subcritical, check_supercritical, PicardConfig};
use superdrift::{Field, GridSpec, NoiseSeed, VectorField};

use crate::failure::Failure;

fn two_pi() -> f64 {
    2.0 * PI
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every stage draws from a named child of it.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridBlock,
    pub drift: DriftBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub forcing: ForcingBlock,
    #[serde(default)]
    pub initial: InitialBlock,
    #[serde(default)]
    pub checks: ChecksBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L", default = "two_pi")]
    pub l: f64,
    #[serde(rename = "T", default = "one")]
    pub t: f64,
    pub n_t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftBlock {
    Zero,
    GaussianField {
        gamma: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
        #[serde(default = "yes")]
        divergence_free: bool,
    },
    BiotSavart {
        positions: Vec<[f64; 2]>,
        intensities: Vec<f64>,
        /// Mollification scale of the vorticity on the grid.
        mollifier: u32,
    },
    She {
        gamma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    ExplicitFile {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    Subcritical {
        alpha_b: f64,
        p_b: f64,
        q_b: f64,
        /// Fixed damping; searched by doubling when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iters: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tol: Option<f64>,
    },
    Supercritical {
        alpha: f64,
        p: f64,
        q: f64,
        /// Compressibility constant in the energy bound.
        #[serde(default)]
        kappa: f64,
    },
}

impl Regime {
    pub fn picard(&self) -> Option<PicardConfig> {
        match *self {
            Regime::Subcritical {
                alpha_b,
                p_b,
                q_b,
                lambda,
                max_iters,
                tol,
            } => {
                let mut cfg = PicardConfig::new(lambda.unwrap_or(1.0), alpha_b, p_b, q_b);
                if let Some(m) = max_iters {
                    cfg.max_iters = m;
                }
                if let Some(t) = tol {
                    cfg.tol = t;
                }
                Some(cfg)
            }
            Regime::Supercritical { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Euler-Maruyama steps over `[0, T]`.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Mollification levels for the per-level PDE reports and checks.
    #[serde(default)]
    pub levels: Vec<u32>,
    /// Level of the drift driving the main ensemble; unmollified if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    /// Fixed starting point; paths start from the initial density otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_paths() -> usize {
    10_000
}

fn default_steps() -> usize {
    100
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            paths: default_paths(),
            steps: default_steps(),
            levels: Vec::new(),
            level: None,
            start: None,
            output: None,
        }
    }
}

/// Test function `offset + amplitude cos(2 pi m·x / L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingBlock {
    pub mode: Vec<i32>,
    pub amplitude: f64,
    pub offset: f64,
}

impl Default for ForcingBlock {
    fn default() -> Self {
        ForcingBlock {
            mode: vec![1],
            amplitude: 1.0,
            offset: 0.0,
        }
    }
}

/// Initial density `exp(kappa sum_a cos(2 pi (x_a - c_a) / L))`, normalized;
/// zero concentration is the uniform density.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    #[serde(default)]
    pub concentration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub krylov: Option<KrylovCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cauchy: Option<CauchyCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub martingale: Option<MartingaleCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zvonkin: Option<ZvonkinCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vortex: Option<VortexCheck>,
}

fn two() -> f64 {
    2.0
}

fn three() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovCheck {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub paths: usize,
    /// Coarse ensemble steps; the fine ensemble uses twice as many.
    pub steps: usize,
    /// Largest accepted max/min ratio across levels.
    #[serde(default = "two")]
    pub uniformity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyCheck {
    pub levels: Vec<u32>,
    pub finest: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleCheck {
    pub s: f64,
    pub t: f64,
    /// Largest accepted `|mean| / stderr`.
    #[serde(default = "three")]
    pub threshold: f64,
}

fn forty() -> usize {
    40
}

fn min_r2() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeCheck {
    #[serde(default = "forty")]
    pub bins: usize,
    #[serde(default = "min_r2")]
    pub min_r2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZvonkinCheck {
    /// Component whose Picard solve drives the damping search.
    #[serde(default)]
    pub search_component: usize,
}

fn hundred() -> usize {
    100
}

fn radius_tol() -> f64 {
    1e-4
}

fn variance_tol() -> f64 {
    0.05
}

fn ball() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexCheck {
    pub positions: Vec<[f64; 2]>,
    pub intensities: Vec<f64>,
    #[serde(default)]
    pub blob_delta: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub noise_scale: f64,
    /// Independent realizations for the center-of-vorticity variance.
    #[serde(default = "hundred")]
    pub runs: usize,
    #[serde(default = "radius_tol")]
    pub radius_tolerance: f64,
    #[serde(default = "variance_tol")]
    pub variance_tolerance: f64,
    #[serde(default = "ball")]
    pub ball_radius: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<GridSpec, Failure> {
        let g = &self.grid;
        Ok(GridSpec::new(g.d, g.l, g.n, g.t, g.n_t)?)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let grid = self.grid()?;
        let d = grid.dim;
        match &self.regime {
            Some(Regime::Subcritical { alpha_b, p_b, q_b, .. }) => check_subcritical(d, *alpha_b, *p_b, *q_b)?,
            Some(Regime::Supercritical { alpha, p, q, .. }) => check_supercritical(d, *alpha, *p, *q)?,
            None => {}
        }
        if let Some(k) = &self.checks.krylov {
            check_supercritical(d, k.alpha, k.p, k.q)?;
        }
        if self.forcing.mode.len() > d {
            return Err(Failure::Config(format!("forcing mode has more than {d} entries")));
        }
        if let Some(s) = &self.run.start {
            if s.len() != d {
                return Err(Failure::Config(format!("run.start needs {d} coordinates")));
            }
        }
        if let Some(c) = &self.initial.center {
            if c.len() != d {
                return Err(Failure::Config(format!("initial.center needs {d} coordinates")));
            }
        }
        if self.run.paths == 0 || self.run.steps == 0 {
            return Err(Failure::Config("run.paths and run.steps must be positive".into()));
        }
        if self.checks.zvonkin.is_some() && !matches!(self.regime, Some(Regime::Subcritical { .. })) {
            return Err(Failure::Config("the zvonkin check needs a subcritical regime".into()));
        }
        Ok(())
    }

    /// The drift on the configured grid. Files are resolved against `base`.
    pub fn drift(&self, base: &Path, seed: NoiseSeed) -> Result<VectorField, Failure> {
        let grid = self.grid()?;
        let b = match &self.drift {
            DriftBlock::Zero => VectorField::zeros(&grid, 1, "zero"),
            DriftBlock::GaussianField {
                gamma,
                amplitude,
                cutoff,
                divergence_free,
            } => {
                let spec = SpectralMeasureSpec {
                    dim: grid.dim,
                    gamma: *gamma,
                    divergence_free: *divergence_free,
                    cutoff: *cutoff,
                    amplitude: *amplitude,
                };
                synth_gaussian_field(&grid, &spec, seed)?
            }
            DriftBlock::BiotSavart {
                positions,
                intensities,
                mollifier,
            } => {
                let v = superdrift::fields::biot_savart_drift(positions.clone(), intensities.clone(), 0.0)?;
                PointVortices::on_grid(&v, &grid, &MollifierSpec::new(*mollifier))?
            }
            DriftBlock::She { gamma, amplitude } => she_environment(&grid, *gamma, seed)?.scaled(*amplitude),
            DriftBlock::ExplicitFile { path } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let b = read_vector_field(&full)?;
                if !b.grid().same_space(&grid) || b.dim() != grid.dim {
                    return Err(Failure::Config(format!(
                        "drift file {} does not match the configured grid",
                        full.display()
                    )));
                }
                // the file carries no horizon of its own when static
                let comps = b.components().iter().map(|c| Field::from_data(&grid, c.n_slices(), c.data().to_vec(), c.label.clone())).collect::<Result<_, _>>()?;
                VectorField::new(comps, b.divergence_free)?
            }
        };
        Ok(b)
    }

    /// `b` mollified at `level`, or `b` itself.
    pub fn at_level(b: &VectorField, level: Option<u32>) -> Result<VectorField, Failure> {
        Ok(match level {
            Some(n) => mollify(b, &MollifierSpec::new(n))?,
            None => b.clone(),
        })
    }

    pub fn forcing(&self) -> Result<Field, Failure> {
        let grid = self.grid()?;
        let k = grid.k_unit();
        let f = &self.forcing;
        Ok(Field::from_fn(&grid, "f", |x| {
            let phase: f64 = f.mode.iter().zip(x).map(|(m, x)| *m as f64 * x).sum();
            f.offset + f.amplitude * (k * phase).cos()
        }))
    }

    pub fn initial_density(&self) -> Result<Field, Failure> {
        let grid = self.grid()?;
        let k = grid.k_unit();
        let c = self.initial.center.clone().unwrap_or_else(|| vec![0.0; grid.dim]);
        let kappa = self.initial.concentration;
        let raw = Field::from_fn(&grid, "rho0", |x| {
            (kappa * x.iter().zip(&c).map(|(x, c)| (k * (x - c)).cos()).sum::<f64>()).exp()
        });
        let mass = raw.integral(0);
        Ok(raw.scaled(1.0 / mass))
    }
}
