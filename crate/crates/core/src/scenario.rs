//! Scenario library: initial data plus time-dependent boundary displacement
//! and volume load, all given as global nodal fields smooth in time.
//!
//! Scenarios with a nonzero initial concentration profile start from the
//! static force balance for that profile, so no spurious elastic transient
//! rings through the run.

use crate::grid::{GridDesc, ScalarField, VectorField};
use crate::material::MaterialModel;
use crate::stepper::{static_displacement, StepperError};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    Unknown(String),
    #[error(transparent)]
    Solver(#[from] StepperError),
}

/// Affine-in-time nodal field `w(t) = base + t * rate`, so the first time
/// derivative is `rate` and the second vanishes.
#[derive(Debug, Clone)]
pub struct TimeRamp {
    pub base: Vec<f64>,
    pub rate: Vec<f64>,
}

impl TimeRamp {
    pub fn zero(len: usize) -> Self {
        TimeRamp {
            base: vec![0.0; len],
            rate: vec![0.0; len],
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.rate)
            .map(|(b, r)| b + t * r)
            .collect()
    }

    pub fn dot(&self, _t: f64) -> Vec<f64> {
        self.rate.clone()
    }

    pub fn ddot(&self, _t: f64) -> Vec<f64> {
        vec![0.0; self.base.len()]
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub c0: ScalarField,
    pub u0: VectorField,
    pub v0: VectorField,
    pub z0: ScalarField,
    /// Boundary displacement b(t); constrains u on the Dirichlet set, and its
    /// global extension enters the external-work bookkeeping.
    pub boundary: TimeRamp,
    /// Volume load l(t).
    pub load: TimeRamp,
}

/// Quiescent state: c0 = 0 (a stationary point of Psi'), undamaged material,
/// no forcing; every field stays put.
pub fn equilibrium(grid: &GridDesc) -> Scenario {
    let n = grid.n_nodes();
    let nv = grid.dimension * n;
    Scenario {
        name: "equilibrium".to_string(),
        c0: vec![0.0; n],
        u0: vec![0.0; nv],
        v0: vec![0.0; nv],
        z0: vec![1.0; n],
        boundary: TimeRamp::zero(nv),
        load: TimeRamp::zero(nv),
    }
}

/// Dirichlet ramp b(t) = t * rate * (x/Lx) in the x-component: the left face
/// stays pinned, the right face is pulled at constant speed. The initial
/// velocity matches the ramp, and u0 solves the static balance for the
/// initial cosine concentration profile.
pub fn stretch(
    grid: &GridDesc,
    material: &MaterialModel,
    delta: f64,
    rate: f64,
    c0_amplitude: f64,
) -> Result<Scenario, ScenarioError> {
    let n = grid.n_nodes();
    let nv = grid.dimension * n;
    let lx = grid.lengths[0];
    let mut ramp = vec![0.0; nv];
    for i in 0..n {
        ramp[i] = rate * grid.coord(i)[0] / lx;
    }
    let c0 = cosine_profile(grid, c0_amplitude);
    let z0 = vec![1.0; n];
    let u0 = static_displacement(
        grid,
        material,
        delta,
        &c0,
        &z0,
        &vec![0.0; nv],
        &vec![0.0; nv],
        1e-12,
        200_000,
    )?;
    Ok(Scenario {
        name: "stretch".to_string(),
        c0,
        u0,
        v0: ramp.clone(),
        z0,
        boundary: TimeRamp {
            base: vec![0.0; nv],
            rate: ramp,
        },
        load: TimeRamp::zero(nv),
    })
}

/// Zero-mean cosine perturbation of c = 0 with no forcing, started at the
/// static balance for the perturbed eigenstrain; exercises spinodal dynamics
/// under the conserved flow.
pub fn phase_separation(
    grid: &GridDesc,
    material: &MaterialModel,
    delta: f64,
    amplitude: f64,
) -> Result<Scenario, ScenarioError> {
    let n = grid.n_nodes();
    let nv = grid.dimension * n;
    let c0 = cosine_profile(grid, amplitude);
    let z0 = vec![1.0; n];
    let u0 = static_displacement(
        grid,
        material,
        delta,
        &c0,
        &z0,
        &vec![0.0; nv],
        &vec![0.0; nv],
        1e-12,
        200_000,
    )?;
    Ok(Scenario {
        name: "phase-separation".to_string(),
        c0,
        u0,
        v0: vec![0.0; nv],
        z0,
        boundary: TimeRamp::zero(nv),
        load: TimeRamp::zero(nv),
    })
}

/// `a * cos(2 pi x / Lx) [* cos(2 pi y / Ly)]`: exactly zero-mean under the
/// trapezoid rule because the nodes sample full periods.
fn cosine_profile(grid: &GridDesc, amplitude: f64) -> ScalarField {
    (0..grid.n_nodes())
        .map(|i| {
            let [x, y] = grid.coord(i);
            let mut v = amplitude * (TAU * x / grid.lengths[0]).cos();
            if grid.dimension == 2 {
                v *= (TAU * y / grid.lengths[1]).cos();
            }
            v
        })
        .collect()
}

/// Builds a scenario from the library by name.
pub fn by_name(
    name: &str,
    grid: &GridDesc,
    material: &MaterialModel,
    delta: f64,
    stretch_rate: f64,
    amplitude: f64,
) -> Result<Scenario, ScenarioError> {
    match name {
        "equilibrium" => Ok(equilibrium(grid)),
        "stretch" => stretch(grid, material, delta, stretch_rate, amplitude),
        "phase-separation" | "phase_separation" => {
            phase_separation(grid, material, delta, amplitude)
        }
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}
