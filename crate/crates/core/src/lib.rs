//! Semi-implicit solver for a coupled Cahn-Hilliard / elastodynamics / damage
//! system. Each time step minimizes an incremental functional over the
//! constrained state space (conserved mean for the concentration, Dirichlet
//! trace for the displacement, irreversibility box for the damage), recovers
//! the chemical potential, and certifies the discrete Euler-Lagrange system,
//! the energy inequality and the constraints.

pub mod diagnostics;
pub mod grid;
pub mod hminus;
pub mod material;
pub mod scenario;
pub mod stepper;

pub use grid::{
    build_grid, lp_gradient_norm, second_gradient_form, symmetric_gradient, BoundaryTag, Face,
    GridConfig, GridDesc, ScalarField, SymTensor, VectorField,
};
pub use hminus::{HminusError, WeightedPoissonProblem};
pub use material::{AssumptionReport, MaterialModel, MobilityLaw};
pub use scenario::{Scenario, TimeRamp};
pub use stepper::{
    run_simulation, SimulationError, State, StepResult, StepperError, StepperParams, Trajectory,
};
