//! Semi-implicit time stepping by constrained minimization of the incremental
//! functional: cyclic block minimization (u, then c, then z) until the four
//! discrete Euler-Lagrange residuals fall below the outer tolerance, then
//! recovery of the chemical potential and the subgradient.

mod blocks;
pub mod objective;
#[cfg(test)]
mod tests;

pub use blocks::{
    minimize_c_block, minimize_u_block, minimize_z_block, recover_mu, static_displacement,
    vi_residual,
};
pub use objective::{free_energy, objective, objective_gradient, GradientReport, StepContext};

use crate::diagnostics::{
    self, conservation_checks, el_residuals, energy_terms, error_terms, EnergyLedger,
    ResidualReport,
};
use crate::grid::{GridDesc, ScalarField, SecondGradient, VectorField};
use crate::hminus::{HminusError, WeightedPoissonProblem};
use crate::material::{MaterialError, MaterialModel};
use crate::scenario::Scenario;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepperError {
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Hminus(#[from] HminusError),
    #[error("infeasible candidate: {what}")]
    Infeasible { what: String },
    #[error("line search underflow in the {block} block after {iters} iterations (residual {residual:.3e})")]
    LineSearch {
        block: &'static str,
        iters: usize,
        residual: f64,
    },
    #[error("{block} block budget of {budget} iterations exhausted (residual {residual:.3e})")]
    BlockBudget {
        block: &'static str,
        budget: usize,
        residual: f64,
    },
    #[error("outer budget of {budget} sweeps exhausted; worst residual {residual:.3e}")]
    OuterBudget {
        budget: usize,
        residual: f64,
        best: Box<StepResult>,
    },
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("the time-discrete scheme requires delta > 0; study delta -> 0 with the sweep driver instead")]
    DeltaNotPositive,
    #[error("invalid stepper parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        source: StepperError,
        partial: Box<Trajectory>,
    },
}

/// Time-step parameters and solver tolerances.
#[derive(Debug, Clone)]
pub struct StepperParams {
    pub tau: f64,
    pub delta: f64,
    pub t_final: f64,
    /// Acceptance threshold for the Euler-Lagrange residuals r1..r4.
    pub outer_tol: f64,
    /// Projected-gradient tolerance of the c and z block solves.
    pub block_tol: f64,
    /// Absolute residual tolerance of the inner linear solves.
    pub linear_tol: f64,
    pub max_outer: usize,
    pub max_block_iters: usize,
    pub max_linear_iters: usize,
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for StepperParams {
    fn default() -> Self {
        StepperParams {
            tau: 0.01,
            delta: 1e-3,
            t_final: 0.5,
            outer_tol: 1e-6,
            // the inner solves must sit well below the block tolerance: their
            // residual enters the c-gradient amplified by 1/tau
            block_tol: 1e-8,
            linear_tol: 1e-12,
            max_outer: 500,
            max_block_iters: 200_000,
            max_linear_iters: 200_000,
            armijo: 1e-4,
            backtrack: 0.5,
        }
    }
}

/// Nodal fields at one accepted time index plus the history the scheme needs.
#[derive(Debug, Clone)]
pub struct State {
    pub c: ScalarField,
    pub u: VectorField,
    pub z: ScalarField,
    /// v = (u - u_prev)/tau, also at k = 0 via u^{-1} = u^0 - tau v^0.
    pub v: VectorField,
    pub c_prev: ScalarField,
    pub u_prev: VectorField,
    pub u_prev2: VectorField,
    pub z_prev: ScalarField,
    pub k: usize,
    pub t: f64,
}

impl State {
    /// Initial state: the artificial history u^{-1} = u^0 - tau v^0 makes the
    /// velocity identity hold at k = 0.
    pub fn initial(scenario: &Scenario, tau: f64) -> State {
        let u_m1: Vec<f64> = scenario
            .u0
            .iter()
            .zip(&scenario.v0)
            .map(|(u, v)| u - tau * v)
            .collect();
        State {
            c: scenario.c0.clone(),
            u: scenario.u0.clone(),
            z: scenario.z0.clone(),
            v: scenario.v0.clone(),
            c_prev: scenario.c0.clone(),
            u_prev: u_m1.clone(),
            u_prev2: u_m1,
            z_prev: scenario.z0.clone(),
            k: 0,
            t: 0.0,
        }
    }
}

/// Accepted step: new state, recovered chemical potential and subgradient,
/// residual report and the objective bookkeeping.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: State,
    pub mu: ScalarField,
    pub xi: ScalarField,
    pub residuals: ResidualReport,
    pub outer_sweeps: usize,
    /// Objective value at the accepted minimizer.
    pub objective: f64,
    /// Objective at the (feasible) history point; never smaller than the accepted value.
    pub objective_at_history: f64,
    /// Objective after each block solve, non-increasing.
    pub objective_trace: Vec<f64>,
}

/// One simulation: scenario + parameters + material + grid, serially stepped.
pub struct Stepper<'a> {
    pub grid: &'a GridDesc,
    pub material: &'a MaterialModel,
    pub params: StepperParams,
    pub scenario: &'a Scenario,
    pub mass_target: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a GridDesc,
        material: &'a MaterialModel,
        params: StepperParams,
        scenario: &'a Scenario,
    ) -> Self {
        let mass_target = grid.integrate(&scenario.c0);
        Stepper {
            grid,
            material,
            params,
            scenario,
            mass_target,
        }
    }

    /// Assembles the frozen per-step context for advancing `prev` to k+1.
    pub fn step_context(&'a self, prev: &'a State) -> Result<StepContext<'a>, StepperError> {
        let k = prev.k + 1;
        let t = k as f64 * self.params.tau;
        let n = self.grid.n_nodes();
        let weight: Vec<f64> = (0..n)
            .map(|i| self.material.mobility(prev.c[i], prev.z[i].clamp(0.0, 1.0)))
            .collect();
        let v0 = WeightedPoissonProblem::new(
            self.grid,
            &weight,
            self.params.linear_tol,
            self.params.max_linear_iters,
        )?;
        Ok(StepContext {
            grid: self.grid,
            material: self.material,
            params: &self.params,
            c_prev: &prev.c,
            u_prev: &prev.u,
            u_prev2: &prev.u_prev,
            z_prev: &prev.z,
            load: self.scenario.load.eval(t),
            bdry: self.scenario.boundary.eval(t),
            v0,
            mass_target: self.mass_target,
        })
    }

    /// One step of the recursive minimization: cyclic block solves until all
    /// Euler-Lagrange residuals pass, then potential and subgradient recovery.
    pub fn step(&self, prev: &State) -> Result<StepResult, StepperError> {
        let ctx = self.step_context(prev)?;
        let grid = self.grid;
        let tau = self.params.tau;
        let k = prev.k + 1;

        let mut u = grid.apply_dirichlet(&prev.u, &ctx.bdry);
        let mut c = prev.c.clone();
        let mut z = prev.z.clone();

        let objective_at_history = objective(&ctx, &c, &u, &z)?;
        let mut trace = Vec::new();
        let mut best: Option<(f64, StepResult)> = None;

        for sweep in 1..=self.params.max_outer {
            let (u_new, _res) = minimize_u_block(&ctx, &c, &z, &u)?;
            u = u_new;
            trace.push(objective(&ctx, &c, &u, &z)?);

            let c_out = minimize_c_block(&ctx, &u, &z, &c)?;
            c = c_out.field;
            trace.push(objective(&ctx, &c, &u, &z)?);

            let z_out = minimize_z_block(&ctx, &c, &u, &z)?;
            z = z_out.field;
            trace.push(objective(&ctx, &c, &u, &z)?);

            let mu = recover_mu(&ctx, &c, &u, &z)?;
            let residuals = el_residuals(&ctx, &c, &u, &z, &mu);
            let worst = residuals.max_r();

            let improved = match &best {
                Some((b, _)) => worst < *b,
                None => true,
            };
            if worst <= self.params.outer_tol || improved {
                let v: Vec<f64> = u.iter().zip(&prev.u).map(|(a, b)| (a - b) / tau).collect();
                let xi = diagnostics::subgradient_xi(grid, self.material, &c, &u, &z);
                let state = State {
                    c: c.clone(),
                    u: u.clone(),
                    z: z.clone(),
                    v,
                    c_prev: prev.c.clone(),
                    u_prev: prev.u.clone(),
                    u_prev2: prev.u_prev.clone(),
                    z_prev: prev.z.clone(),
                    k,
                    t: k as f64 * tau,
                };
                let result = StepResult {
                    state,
                    mu,
                    xi,
                    residuals,
                    outer_sweeps: sweep,
                    objective: *trace.last().unwrap(),
                    objective_at_history,
                    objective_trace: trace.clone(),
                };
                if worst <= self.params.outer_tol {
                    return Ok(result);
                }
                best = Some((worst, result));
            }
        }
        let (residual, best) = best.expect("at least the first sweep is recorded");
        Err(StepperError::OuterBudget {
            budget: self.params.max_outer,
            residual,
            best: Box::new(best),
        })
    }

    /// Full run over M = max(1, floor(T/tau)) steps with the ledger assembled
    /// on the fly.
    pub fn run(&self) -> Result<Trajectory, SimulationError> {
        if self.params.delta <= 0.0 {
            return Err(SimulationError::DeltaNotPositive);
        }
        if self.params.tau <= 0.0 {
            return Err(SimulationError::BadParameter {
                name: "tau",
                value: self.params.tau,
            });
        }
        if self.params.t_final <= 0.0 {
            return Err(SimulationError::BadParameter {
                name: "t_final",
                value: self.params.t_final,
            });
        }
        for (name, value) in [
            ("outer_tol", self.params.outer_tol),
            ("block_tol", self.params.block_tol),
            ("linear_tol", self.params.linear_tol),
        ] {
            if value <= 0.0 {
                return Err(SimulationError::BadParameter { name, value });
            }
        }
        if let Some(&bad) = self.scenario.z0.iter().find(|z| !(0.0..=1.0).contains(*z)) {
            return Err(SimulationError::BadParameter {
                name: "z0",
                value: bad,
            });
        }
        let m_steps = ((self.params.t_final / self.params.tau + 1e-9).floor() as usize).max(1);

        let state0 = State::initial(self.scenario, self.params.tau);
        let mut sg = SecondGradient::new(self.grid);
        let e0 = free_energy(self.grid, self.material, &state0.c, &state0.u, &state0.z)
            + 0.5 * self.params.delta * sg.form(self.grid, &state0.u, &state0.u);
        let k0 = 0.5 * self.grid.mass_inner(&state0.v, &state0.v);
        let mut ledger = EnergyLedger::new(e0, k0);

        let mut states = vec![state0];
        let mut mus = Vec::new();
        let mut xis = Vec::new();

        for k in 1..=m_steps {
            let prev = states.last().unwrap();
            let result = match self.step(prev) {
                Ok(r) => r,
                Err(source) => {
                    return Err(SimulationError::StepFailed {
                        step: k,
                        source,
                        partial: Box::new(Trajectory {
                            states,
                            mus,
                            xis,
                            ledger,
                            tau: self.params.tau,
                            mass_target: self.mass_target,
                        }),
                    })
                }
            };

            // Per-step certification data. The context is rebuilt so the
            // diagnostics see exactly the frozen metric the step used.
            let ctx = match self.step_context(prev) {
                Ok(c) => c,
                Err(source) => {
                    return Err(SimulationError::StepFailed {
                        step: k,
                        source,
                        partial: Box::new(Trajectory {
                            states,
                            mus,
                            xis,
                            ledger,
                            tau: self.params.tau,
                            mass_target: self.mass_target,
                        }),
                    })
                }
            };
            let t = k as f64 * self.params.tau;
            let b_now = self.scenario.boundary.eval(t);
            let b_before = self.scenario.boundary.eval(t - self.params.tau);
            let beta: Vec<f64> = b_now
                .iter()
                .zip(&b_before)
                .map(|(a, b)| (a - b) / self.params.tau)
                .collect();
            let snap = energy_terms(&ctx, &result.state, &result.mu, &beta);
            let errs = error_terms(&ctx, &result.state);
            let cons = conservation_checks(
                self.grid,
                &result.state.c,
                &result.state.z,
                &result.state.z_prev,
                self.mass_target,
            );
            ledger.push_step(k, t, &snap, &errs, &result.residuals, &cons);

            mus.push(result.mu);
            xis.push(result.xi);
            states.push(result.state);
        }

        Ok(Trajectory {
            states,
            mus,
            xis,
            ledger,
            tau: self.params.tau,
            mass_target: self.mass_target,
        })
    }
}

/// Runs a scenario end to end; convenience over [`Stepper`].
pub fn run_simulation(
    grid: &GridDesc,
    material: &MaterialModel,
    params: StepperParams,
    scenario: &Scenario,
) -> Result<Trajectory, SimulationError> {
    Stepper::new(grid, material, params, scenario).run()
}

/// Recorded trajectory with the time interpolants of the scheme.
#[derive(Debug)]
pub struct Trajectory {
    /// States at k = 0..=M.
    pub states: Vec<State>,
    /// Chemical potential per accepted step (k >= 1).
    pub mus: Vec<ScalarField>,
    /// Subgradient per accepted step (k >= 1).
    pub xis: Vec<ScalarField>,
    pub ledger: EnergyLedger,
    pub tau: f64,
    pub mass_target: f64,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    fn index_at(&self, t: f64) -> usize {
        let k = (t / self.tau - 1e-12).ceil();
        (k.max(0.0) as usize).min(self.n_steps())
    }

    /// Piecewise-constant interpolant w_tau(t) = w^{ceil(t/tau)}.
    pub fn state_at(&self, t: f64) -> &State {
        &self.states[self.index_at(t)]
    }

    /// Backward-shifted interpolant w_tau^-(t) = w^{max(0, ceil(t/tau)-1)}.
    pub fn state_before(&self, t: f64) -> &State {
        &self.states[self.index_at(t).saturating_sub(1)]
    }

    /// Piecewise-linear interpolant of a field selected from the states.
    pub fn linear_interp<F>(&self, t: f64, extract: F) -> Vec<f64>
    where
        F: Fn(&State) -> &[f64],
    {
        let k = self.index_at(t);
        if k == 0 {
            return extract(&self.states[0]).to_vec();
        }
        let beta = ((t - (k - 1) as f64 * self.tau) / self.tau).clamp(0.0, 1.0);
        extract(&self.states[k])
            .iter()
            .zip(extract(&self.states[k - 1]))
            .map(|(a, b)| beta * a + (1.0 - beta) * b)
            .collect()
    }

    /// Piecewise-constant chemical potential; recovered only for k >= 1, so
    /// the initial interval has none.
    pub fn mu_at(&self, t: f64) -> Option<&ScalarField> {
        let k = self.index_at(t);
        if k == 0 {
            None
        } else {
            Some(&self.mus[k - 1])
        }
    }
}
