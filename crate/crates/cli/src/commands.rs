//! The `synth`, `pde` and `sde` pipelines.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use superdrift::pde::{
    backward_kolmogorov, fokker_planck, fokker_planck_energy, gradient_bound_check, kolmogorov_energy,
    lambda_search, picard_kolmogorov, EnergyReport,
};
use superdrift::sde::{
    cauchy_in_n, krylov_check, martingale_defect, simulate_ensemble, transition_density, vortex_system,
    zvonkin_transform, EnsembleConfig, InitialCondition, KrylovConfig, PathEnsemble, VortexConfig, VortexState,
};
use superdrift::spectral::{build_partition, regularity_fit};
use superdrift::{NoiseSeed, VectorField};

use crate::config::{ExperimentConfig, Regime};
use crate::failure::Failure;
use crate::manifest::Run;

/// One verification outcome as written to `checks.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn upper(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        CheckRecord {
            name: name.into(),
            measured,
            threshold,
            pass: measured <= threshold,
        }
    }

    pub fn lower(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        CheckRecord {
            name: name.into(),
            measured,
            threshold,
            pass: measured >= threshold,
        }
    }
}

fn level_name(level: Option<u32>) -> String {
    level.map_or_else(|| "raw".into(), |n| format!("n={n}"))
}

fn levels_or_raw(levels: &[u32]) -> Vec<Option<u32>> {
    if levels.is_empty() {
        vec![None]
    } else {
        levels.iter().map(|n| Some(*n)).collect()
    }
}

/// Writes `checks.json` and turns any failed check into an error.
fn conclude(run: &mut Run, checks: &[CheckRecord]) -> Result<Vec<String>, Failure> {
    run.write_json("checks.json", &checks)?;
    Ok(checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect())
}

fn finish(run: Run, failed: Vec<String>) -> Result<(), Failure> {
    run.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}

fn drift_seed(root: NoiseSeed) -> NoiseSeed {
    root.child_named("drift")
}

pub fn synth(cfg: &ExperimentConfig, base: &Path, run: &mut Run) -> Result<(), Failure> {
    let seed = run.seed("drift", drift_seed(NoiseSeed::new(cfg.seed)));
    let b = run.stage("synthesize", || cfg.drift(base, seed))?;
    let label = b.component(0).label.clone();
    run.write_field("drift.fld", &b, &label)?;
    let fit = run.stage("regularity", || {
        let partition = build_partition(b.grid())?;
        Ok(regularity_fit(&b, b.n_slices() - 1, &partition)?)
    })?;
    run.write_json(
        "regularity.json",
        &json!({
            "measured_exponent": fit.measured_exponent,
            "slope": fit.slope,
            "blocks": fit.blocks,
            "max_norm": b.max_norm(),
        }),
    )?;
    Ok(())
}

pub fn synth_command(cfg: &ExperimentConfig, base: &Path, mut run: Run) -> Result<(), Failure> {
    synth(cfg, base, &mut run)?;
    finish(run, Vec::new())
}

#[derive(Serialize)]
struct LevelEnergy {
    level: Option<u32>,
    fokker_planck: EnergyReport,
    kolmogorov: EnergyReport,
    /// Largest `|int rho(t) - 1|` over the slices.
    mass_error: f64,
}

pub fn pde_command(cfg: &ExperimentConfig, base: &Path, mut run: Run) -> Result<(), Failure> {
    let seed = run.seed("drift", drift_seed(NoiseSeed::new(cfg.seed)));
    let b = run.stage("drift", || cfg.drift(base, seed))?;
    let f = cfg.forcing()?;
    let regime = cfg
        .regime
        .clone()
        .ok_or_else(|| Failure::Config("pde needs a [regime] section".into()))?;
    let mut checks = Vec::new();
    match regime {
        Regime::Supercritical { alpha, p, q, kappa } => {
            let rho0 = cfg.initial_density()?;
            let mut energies = Vec::new();
            for level in levels_or_raw(&cfg.run.levels) {
                let name = level_name(level);
                let entry = run.stage(&format!("energy {name}"), || {
                    let bn = ExperimentConfig::at_level(&b, level)?;
                    let rho = fokker_planck(&bn, &rho0)?;
                    let mass_error = (0..rho.n_slices())
                        .map(|k| (rho.integral(k) - 1.0).abs())
                        .fold(0.0, f64::max);
                    let u = backward_kolmogorov(&bn, &f, f.grid().time_horizon)?;
                    Ok(LevelEnergy {
                        level,
                        fokker_planck: fokker_planck_energy(&rho, kappa),
                        kolmogorov: kolmogorov_energy(&u, &f, alpha, p, q),
                        mass_error,
                    })
                })?;
                checks.push(CheckRecord::upper(
                    format!("fokker-planck energy {name}"),
                    entry.fokker_planck.ratio,
                    1.0,
                ));
                checks.push(CheckRecord::upper(format!("mass {name}"), entry.mass_error, 1e-8));
                energies.push(entry);
            }
            if energies.len() > 1 {
                let (lo, hi) = energies.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| {
                    let v = e.fokker_planck.energy();
                    (lo.min(v), hi.max(v))
                });
                checks.push(CheckRecord::upper("fokker-planck energy uniformity", hi / lo, 2.0));
            }
            run.write_json("energy.json", &energies)?;
        }
        Regime::Subcritical { lambda, .. } => {
            let pc = cfg.regime.as_ref().and_then(Regime::picard).expect("subcritical");
            let bn = ExperimentConfig::at_level(&b, cfg.run.level)?;
            let result = run.stage("picard", || {
                Ok(match lambda {
                    Some(_) => {
                        let sol = picard_kolmogorov(&bn, &f, &pc)?;
                        let g = gradient_bound_check(&sol.u);
                        (pc.lambda, sol, g, vec![(pc.lambda, g)])
                    }
                    None => {
                        let s = lambda_search(&bn, &f, &pc)?;
                        (s.lambda, s.solution, s.gradient, s.attempts)
                    }
                })
            })?;
            let (lam, sol, gradient, attempts) = result;
            run.write_json(
                "lambda.json",
                &json!({
                    "lambda": lam,
                    "gradient": gradient,
                    "iterations": sol.iterations,
                    "residuals": sol.residuals,
                    "attempts": attempts,
                }),
            )?;
            checks.push(CheckRecord::upper("gradient bound", gradient, 0.5));
        }
    }
    let failed = conclude(&mut run, &checks)?;
    finish(run, failed)
}

#[derive(Serialize)]
struct EnsembleSummary {
    paths: usize,
    steps: usize,
    dt: f64,
    drift: String,
    /// Mean terminal displacement per coordinate.
    mean_displacement: Vec<f64>,
    /// `E |X_T - X_0|^2`.
    mean_square_displacement: f64,
}

fn summarize(ens: &PathEnsemble) -> EnsembleSummary {
    let d = ens.dim();
    let last = ens.n_steps();
    let m = ens.n_paths() as f64;
    let mut mean = vec![0.0; d];
    let mut msd = 0.0;
    for p in 0..ens.n_paths() {
        let (x0, xt) = (ens.position(p, 0), ens.position(p, last));
        for a in 0..d {
            let dx = xt[a] - x0[a];
            mean[a] += dx / m;
            msd += dx * dx / m;
        }
    }
    EnsembleSummary {
        paths: ens.n_paths(),
        steps: ens.n_steps(),
        dt: ens.dt(),
        drift: ens.drift_label.clone(),
        mean_displacement: mean,
        mean_square_displacement: msd,
    }
}

pub fn sde_command(cfg: &ExperimentConfig, base: &Path, mut run: Run) -> Result<(), Failure> {
    let root = NoiseSeed::new(cfg.seed);
    let seed = run.seed("drift", drift_seed(root));
    let b = run.stage("drift", || cfg.drift(base, seed))?;
    let grid = cfg.grid()?;
    let horizon = grid.time_horizon;
    let f = cfg.forcing()?;
    let rho0 = cfg.initial_density()?;
    let init = match &cfg.run.start {
        Some(x) => InitialCondition::Point(x.clone()),
        None => InitialCondition::Density(&rho0),
    };
    let ens_cfg = EnsembleConfig::over(cfg.run.paths, horizon, cfg.run.steps);
    let ens_seed = run.seed("ensemble", root.child_named("ensemble"));
    let b_main = ExperimentConfig::at_level(&b, cfg.run.level)?;
    let ens = run.stage("ensemble", || Ok(simulate_ensemble(&b_main, &init, &ens_cfg, ens_seed)?))?;
    run.write_json("ensemble.json", &summarize(&ens))?;

    let mut checks = Vec::new();
    let mut details = Map::new();
    let c = &cfg.checks;

    if let Some(k) = &c.krylov {
        let kc = KrylovConfig {
            alpha: k.alpha,
            p: k.p,
            q: k.q,
            ensemble: EnsembleConfig {
                stride: 2,
                ..EnsembleConfig::over(k.paths, horizon, k.steps)
            },
            seed: run.seed("krylov", root.child_named("krylov")),
        };
        let rep = run.stage("krylov", || Ok(krylov_check(&b, &cfg.run.levels, &f, &rho0, &kc)?))?;
        for l in &rep.levels {
            checks.push(CheckRecord {
                name: format!("krylov identity {}", level_name(l.level)),
                measured: (l.mc - l.pde).abs(),
                threshold: l.tolerance,
                pass: l.agree,
            });
        }
        checks.push(CheckRecord::upper("krylov uniformity", rep.uniformity, k.uniformity));
        details.insert("krylov".into(), serde_json::to_value(&rep).expect("serializable"));
    }

    if let Some(cc) = &c.cauchy {
        if cc.levels.len() < 3 {
            return Err(Failure::Config("the cauchy check needs at least three levels".into()));
        }
        let s = run.seed("cauchy", root.child_named("cauchy"));
        let table = run.stage("cauchy", || Ok(cauchy_in_n(&b, &cc.levels, cc.finest, &init, &ens_cfg, s)?))?;
        let worst = table
            .consecutive
            .windows(2)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max);
        checks.push(CheckRecord {
            name: "cauchy trend".into(),
            measured: worst,
            threshold: 1.0,
            pass: table.decreasing,
        });
        run.write_json("cauchy.json", &table)?;
    }

    if let Some(mc) = &c.martingale {
        let levels = if cfg.run.levels.is_empty() {
            vec![cfg.run.level]
        } else {
            cfg.run.levels.iter().map(|n| Some(*n)).collect()
        };
        let mut reports = Vec::new();
        for level in levels {
            let name = level_name(level);
            let rep = run.stage(&format!("martingale {name}"), || {
                let bn = ExperimentConfig::at_level(&b, level)?;
                let e = if level == cfg.run.level {
                    ens.clone()
                } else {
                    simulate_ensemble(&bn, &init, &ens_cfg, ens_seed)?
                };
                Ok(martingale_defect(&e, &bn, &f, mc.s, mc.t)?)
            })?;
            checks.push(CheckRecord::upper(format!("martingale defect {name}"), rep.defect, mc.threshold));
            reports.push(json!({ "level": level, "report": rep }));
        }
        details.insert("martingale".into(), Value::Array(reports));
    }

    if let Some(ec) = &c.envelope {
        if cfg.run.start.is_none() {
            return Err(Failure::Config("the envelope check needs run.start".into()));
        }
        let (hist, rep) = run.stage("envelope", || Ok(transition_density(&ens, ec.bins)?))?;
        checks.push(CheckRecord::lower("envelope linearity", rep.r2, ec.min_r2));
        checks.push(CheckRecord::lower(
            "envelope bulk positivity",
            if rep.bulk_positive { 1.0 } else { 0.0 },
            1.0,
        ));
        let v = VectorField::new(vec![hist], false)?;
        run.write_field("density.fld", &v, "density")?;
        details.insert("envelope".into(), serde_json::to_value(&rep).expect("serializable"));
    }

    if let Some(zc) = &c.zvonkin {
        let mut pc = cfg.regime.as_ref().and_then(Regime::picard).expect("validated");
        let fixed = matches!(cfg.regime, Some(Regime::Subcritical { lambda: Some(_), .. }));
        let z = run.stage("zvonkin", || {
            if !fixed {
                if zc.search_component >= b_main.dim() {
                    return Err(Failure::Config("zvonkin.search_component out of range".into()));
                }
                pc.lambda = lambda_search(&b_main, b_main.component(zc.search_component), &pc)?.lambda;
            }
            Ok(zvonkin_transform(&b_main, &pc, &ens)?)
        })?;
        let r = &z.report;
        checks.push(CheckRecord::upper("zvonkin gradient bound", r.gradient, 0.5));
        checks.push(CheckRecord::upper("zvonkin grad phi", r.grad_phi, 4.0));
        checks.push(CheckRecord::upper("zvonkin grad phi inverse", r.grad_phi_inv, 4.0));
        checks.push(CheckRecord::lower("zvonkin sigma min", r.sigma_min, 0.125));
        checks.push(CheckRecord::upper("zvonkin sigma max", r.sigma_max, 8.0));
        checks.push(CheckRecord::lower("zvonkin injective", if r.injective { 1.0 } else { 0.0 }, 1.0));
        details.insert("zvonkin".into(), serde_json::to_value(r).expect("serializable"));
    }

    if let Some(vc) = &c.vortex {
        let state = VortexState {
            positions: vc.positions.clone(),
            intensities: vc.intensities.clone(),
            blob_delta: vc.blob_delta,
        };
        state.validate()?;
        let vcfg = VortexConfig {
            noise_scale: vc.noise_scale,
            record_every: (vc.steps / 100).max(1),
            ..VortexConfig::new(vc.dt, vc.steps, vc.ball_radius)
        };
        let vseed = run.seed("vortex", root.child_named("vortex"));
        let deterministic = vc.noise_scale == 0.0;
        let runs = if deterministic { 1 } else { vc.runs };
        let trajectories = run.stage("vortex", || {
            (0..runs as u64)
                .into_par_iter()
                .map(|r| vortex_system(&state, &vcfg, vseed.child(r)).map_err(Failure::from))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let interaction = trajectories.iter().map(|t| t.interaction_total).fold(0.0, f64::max);
        checks.push(CheckRecord::upper("vortex interaction total", interaction, 0.0));
        if deterministic && state.n_particles() == 2 {
            let sep = |s: &[[f64; 2]]| (s[0][0] - s[1][0]).hypot(s[0][1] - s[1][1]);
            let r0 = sep(&state.positions);
            let drift = trajectories[0]
                .snapshots
                .iter()
                .map(|s| (sep(s) - r0).abs() / 2.0)
                .fold(0.0, f64::max);
            checks.push(CheckRecord::upper("vortex radius conservation", drift, vc.radius_tolerance));
        } else if !deterministic {
            let c0 = state.center_of_vorticity();
            let t = vc.dt * vc.steps as f64;
            let expected = 2.0 * t * vc.noise_scale.powi(2) * vc.intensities.iter().map(|g| g * g).sum::<f64>();
            let worst = (0..2)
                .map(|a| {
                    let xs: Vec<f64> = trajectories
                        .iter()
                        .map(|tr| tr.centers.last().expect("recorded")[a] - c0[a])
                        .collect();
                    let m = xs.len() as f64;
                    let var = xs.iter().map(|x| x * x).sum::<f64>() / m;
                    (var / expected - 1.0).abs()
                })
                .fold(0.0, f64::max);
            checks.push(CheckRecord::upper("vortex center variance", worst, vc.variance_tolerance));
        }
        details.insert(
            "vortex".into(),
            json!({
                "runs": runs,
                "min_distance": trajectories.iter().map(|t| t.min_distance).fold(f64::INFINITY, f64::min),
                "krylov_statistic": trajectories.iter().map(|t| t.krylov_statistic).sum::<f64>() / runs as f64,
            }),
        );
    }

    if !details.is_empty() {
        run.write_json("details.json", &Value::Object(details))?;
    }
    let failed = conclude(&mut run, &checks)?;
    finish(run, failed)
}
