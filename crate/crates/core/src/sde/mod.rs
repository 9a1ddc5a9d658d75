//! Monte-Carlo side: Euler-Maruyama ensembles for `dX = b_n(t, X) dt + sqrt(2) dW`,
//! additive functionals along them, and checks against the PDE solvers.
//!
//! Positions are stored unwrapped; drifts are read through the periodic
//! interpolation in [`interpolate`].

mod checks;
mod density;
mod ensemble;
mod interp;
mod vortex;
mod zvonkin;

use crate::fields::PointVortices;
use crate::grid::VectorField;

pub use checks::{
    cauchy_in_n, krylov_check, martingale_defect, young_substitute, CauchyTable, KrylovConfig,
    KrylovLevel, KrylovReport, MartingaleReport, YoungReport,
};
pub use density::{transition_density, DensityReport, RadialBin};
pub use ensemble::{
    additive_functional, simulate_ensemble, simulate_with, AdditiveFunctional, EnsembleConfig,
    InitialCondition, PathEnsemble,
};
pub use interp::{interpolate, interpolate_cubic};
pub use vortex::{vortex_system, VortexConfig, VortexState, VortexTrajectory};
pub use zvonkin::{zvonkin_transform, ZvonkinReport, ZvonkinTransform};

/// A drift `b(t, x)` evaluated pointwise along paths.
pub trait Drift: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn label(&self) -> String;
}

/// Grid field read by multilinear interpolation, linear in time.
pub struct GridDrift<'a>(pub &'a VectorField);

impl Drift for GridDrift<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let st = interp::linear_stencil(self.0.grid(), x);
        for (o, c) in out.iter_mut().zip(self.0.components()) {
            *o = interp::apply_in_time(&st, c, t);
        }
    }

    fn label(&self) -> String {
        self.0.component(0).label.clone()
    }
}

pub struct ConstantDrift(pub Vec<f64>);

impl Drift for ConstantDrift {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }

    fn label(&self) -> String {
        format!("constant {:?}", self.0)
    }
}

pub struct ZeroDrift(pub usize);

impl Drift for ZeroDrift {
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn label(&self) -> String {
        "zero".into()
    }
}

/// Frozen vortex field in the plane. A singular evaluation yields NaN, which
/// the simulator reports as a path failure.
pub struct BiotSavartDrift<'a>(pub &'a PointVortices);

impl Drift for BiotSavartDrift<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match self.0.eval([x[0], x[1]]) {
            Ok(v) => out.copy_from_slice(&v),
            Err(_) => out.fill(f64::NAN),
        }
    }

    fn label(&self) -> String {
        format!("biot-savart ({} vortices)", self.0.positions.len())
    }
}
