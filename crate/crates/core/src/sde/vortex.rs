use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::biot_savart_kernel;
use crate::rng::{fill_normal, NoiseSeed};

/// Separation below which an unregularized system is declared collided.
const COLLISION: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexState {
    pub positions: Vec<[f64; 2]>,
    pub intensities: Vec<f64>,
    pub blob_delta: f64,
}

impl VortexState {
    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() || self.positions.len() != self.intensities.len() {
            return Err(Error::config(format!(
                "{} vortex positions for {} intensities",
                self.positions.len(),
                self.intensities.len()
            )));
        }
        if self.positions.iter().flatten().chain(&self.intensities).any(|v| !v.is_finite()) {
            return Err(Error::config("vortex data must be finite"));
        }
        if !(self.blob_delta >= 0.0) {
            return Err(Error::config("blob radius must be nonnegative"));
        }
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        self.positions.len()
    }

    /// `C = sum_j gamma_j X^j`.
    pub fn center_of_vorticity(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (x, g) in self.positions.iter().zip(&self.intensities) {
            c[0] += g * x[0];
            c[1] += g * x[1];
        }
        c
    }

    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.positions.len() {
            for j in i + 1..self.positions.len() {
                let (a, b) = (self.positions[i], self.positions[j]);
                best = best.min(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        best
    }
}

fn default_scale() -> f64 {
    1.0
}

fn default_every() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Multiplies `sqrt(2) dW`; zero gives the deterministic point-vortex flow.
    #[serde(default = "default_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_every")]
    pub record_every: usize,
    /// Radius `M` of the indicator in the integrability statistic.
    pub ball_radius: f64,
}

impl VortexConfig {
    pub fn new(dt: f64, n_steps: usize, ball_radius: f64) -> Self {
        VortexConfig {
            dt,
            n_steps,
            noise_scale: 1.0,
            record_every: 1,
            ball_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexTrajectory {
    /// Recorded states, every `record_every` steps plus the last.
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<[f64; 2]>>,
    pub centers: Vec<[f64; 2]>,
    pub min_distances: Vec<f64>,
    /// Smallest pairwise distance over every step.
    pub min_distance: f64,
    /// Largest `|sum_i gamma_i sum_{j != i} gamma_j K(X^i - X^j)|` over all
    /// steps, accumulated pair by pair.
    pub interaction_total: f64,
    /// `(1/T) int_0^T min_{i != j} |X^i - X^j|^{-1/N} 1{all |X^i| <= M} dt`.
    pub krylov_statistic: f64,
}

fn inverse_power(state: &VortexState, cfg: &VortexConfig) -> f64 {
    let n = state.n_particles();
    let inside = state
        .positions
        .iter()
        .all(|x| x[0].hypot(x[1]) <= cfg.ball_radius);
    if n < 2 || !inside {
        return 0.0;
    }
    state.min_distance().powf(-1.0 / n as f64)
}

/// Euler-Maruyama for
/// `dX^i = sum_{j != i} gamma_j K_delta(X^i - X^j) dt + sqrt(2) dW^i`
/// with direct pair sums. Each pair's kernel is evaluated once and applied
/// with opposite signs, so the weighted interaction cancels exactly.
pub fn vortex_system(state0: &VortexState, cfg: &VortexConfig, seed: NoiseSeed) -> Result<VortexTrajectory> {
    state0.validate()?;
    if !(cfg.dt > 0.0) || cfg.n_steps == 0 || cfg.record_every == 0 || !(cfg.noise_scale >= 0.0) {
        return Err(Error::config("vortex run needs dt > 0, steps, a record interval and noise scale >= 0"));
    }
    let n = state0.n_particles();
    let delta = state0.blob_delta;
    let gamma = &state0.intensities;
    let mut state = state0.clone();
    let mut rng = seed.rng(0);
    let mut noise = vec![0.0; 2 * n];
    let mut drift = vec![[0.0f64; 2]; n];
    let amp = cfg.noise_scale * (2.0 * cfg.dt).sqrt();

    let mut out = VortexTrajectory {
        times: Vec::new(),
        snapshots: Vec::new(),
        centers: Vec::new(),
        min_distances: Vec::new(),
        min_distance: f64::INFINITY,
        interaction_total: 0.0,
        krylov_statistic: 0.0,
    };
    let record = |s: &VortexState, t: f64, out: &mut VortexTrajectory| {
        out.times.push(t);
        out.snapshots.push(s.positions.clone());
        out.centers.push(s.center_of_vorticity());
        out.min_distances.push(s.min_distance());
    };
    record(&state, 0.0, &mut out);

    for step in 0..cfg.n_steps {
        let dist = state.min_distance();
        if delta == 0.0 && dist < COLLISION {
            return Err(Error::Singularity(format!(
                "vortices collided at step {step} (separation {dist:.3e})"
            )));
        }
        out.min_distance = out.min_distance.min(dist);
        out.krylov_statistic += inverse_power(&state, cfg) * cfg.dt;

        drift.iter_mut().for_each(|v| *v = [0.0; 2]);
        let mut total = [0.0f64; 2];
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (state.positions[i], state.positions[j]);
                let k = biot_savart_kernel([a[0] - b[0], a[1] - b[1]], delta)?;
                let gg = gamma[i] * gamma[j];
                for c in 0..2 {
                    drift[i][c] += gamma[j] * k[c];
                    drift[j][c] -= gamma[i] * k[c];
                    total[c] += gg * k[c] + gg * -k[c];
                }
            }
        }
        out.interaction_total = out.interaction_total.max(total[0].abs().max(total[1].abs()));

        if amp > 0.0 {
            fill_normal(&mut rng, &mut noise);
        }
        for (i, x) in state.positions.iter_mut().enumerate() {
            for c in 0..2 {
                x[c] += drift[i][c] * cfg.dt;
                if amp > 0.0 {
                    x[c] += amp * noise[2 * i + c];
                }
            }
        }
        if state.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Instability {
                step,
                detail: "vortex positions left the finite range".into(),
            });
        }
        if (step + 1) % cfg.record_every == 0 || step + 1 == cfg.n_steps {
            record(&state, (step + 1) as f64 * cfg.dt, &mut out);
        }
    }
    out.min_distance = out.min_distance.min(state.min_distance());
    out.krylov_statistic /= cfg.dt * cfg.n_steps as f64;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean_stderr, variance};
    use rayon::prelude::*;
    use std::f64::consts::PI;

    fn pair(r: f64) -> VortexState {
        VortexState {
            positions: vec![[-r, 0.0], [r, 0.0]],
            intensities: vec![1.0, 1.0],
            blob_delta: 0.0,
        }
    }

    #[test]
    fn two_vortices_rotate_rigidly() {
        let r = 2.0;
        // angular speed 1 / (2 r^2)
        let period = 4.0 * PI * r * r;
        let dt = 1e-4;
        let steps = (period / dt).round() as usize;
        let cfg = VortexConfig {
            noise_scale: 0.0,
            record_every: 1000,
            ..VortexConfig::new(dt, steps, 10.0)
        };
        let tr = vortex_system(&pair(r), &cfg, NoiseSeed::new(0)).unwrap();
        for s in &tr.snapshots {
            let sep = (s[0][0] - s[1][0]).hypot(s[0][1] - s[1][1]);
            assert!((sep / 2.0 - r).abs() <= 1e-4, "{}", sep / 2.0);
            // midpoint stays at the origin
            assert!((s[0][0] + s[1][0]).abs() < 1e-9 && (s[0][1] + s[1][1]).abs() < 1e-9);
        }
        let last = tr.snapshots.last().unwrap();
        assert!((last[0][0] + r).abs() < 1e-2 && last[0][1].abs() < 1e-2, "{last:?}");
        assert_eq!(tr.interaction_total, 0.0);
    }

    #[test]
    fn interaction_cancels_exactly_for_many_vortices() {
        let state = VortexState {
            positions: (0..12).map(|i| [(i as f64 * 1.3).sin() * 3.0, (i as f64 * 0.7).cos() * 2.0]).collect(),
            intensities: (0..12).map(|i| 0.3 + 0.17 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
            blob_delta: 0.05,
        };
        let tr = vortex_system(&state, &VortexConfig::new(1e-3, 500, 5.0), NoiseSeed::new(3)).unwrap();
        assert_eq!(tr.interaction_total, 0.0);
        assert!(tr.krylov_statistic > 0.0);
    }

    #[test]
    fn center_of_vorticity_is_brownian() {
        let state = VortexState {
            positions: vec![[-1.0, 0.0], [1.0, 0.3], [0.2, 1.5]],
            intensities: vec![1.0, 0.5, -0.7],
            blob_delta: 0.1,
        };
        let t = 0.5;
        let cfg = VortexConfig::new(1e-3, 500, 10.0);
        let c0 = state.center_of_vorticity();
        let ends: Vec<[f64; 2]> = (0..1000u64)
            .into_par_iter()
            .map(|r| {
                let tr = vortex_system(&state, &cfg, NoiseSeed::new(7).child(r)).unwrap();
                let c = *tr.centers.last().unwrap();
                [c[0] - c0[0], c[1] - c0[1]]
            })
            .collect();
        let expected = 2.0 * t * state.intensities.iter().map(|g| g * g).sum::<f64>();
        for a in 0..2 {
            let v: Vec<f64> = ends.iter().map(|c| c[a]).collect();
            // standard error of a sample variance is about sqrt(2/M) relative
            assert!((variance(&v) / expected - 1.0).abs() < 0.15, "{}", variance(&v) / expected);
        }
    }

    #[test]
    fn single_vortex_is_brownian() {
        let state = VortexState {
            positions: vec![[0.0, 0.0]],
            intensities: vec![2.0],
            blob_delta: 0.0,
        };
        let cfg = VortexConfig::new(0.01, 20, 1.0);
        let d2: Vec<f64> = (0..20_000u64)
            .map(|r| {
                let tr = vortex_system(&state, &cfg, NoiseSeed::new(1).child(r)).unwrap();
                let x = tr.snapshots.last().unwrap()[0];
                x[0] * x[0] + x[1] * x[1]
            })
            .collect();
        let (m, _) = mean_stderr(&d2);
        assert!((m / 0.8 - 1.0).abs() < 0.03, "{m}");
    }

    #[test]
    fn collision_without_blob_is_singular() {
        let state = VortexState {
            positions: vec![[0.0, 0.0], [0.0, 0.0]],
            intensities: vec![1.0, -1.0],
            blob_delta: 0.0,
        };
        let err = vortex_system(&state, &VortexConfig::new(1e-3, 5, 1.0), NoiseSeed::new(0)).unwrap_err();
        assert!(matches!(err, Error::Singularity(_)));
        assert!(VortexState { blob_delta: -1.0, ..pair(1.0) }.validate().is_err());
    }
}
