//! Certification of the discrete solution: Euler-Lagrange residuals, the
//! discrete energy inequality with its four error terms, the closed-form
//! subgradient, mass conservation and irreversibility.

use crate::grid::{symmetric_gradient, GridDesc, ScalarField, SecondGradient};
use crate::material::MaterialModel;
use crate::stepper::objective::{
    c_weak_gradient, elastic_cells, free_energy, u_weak_gradient, z_weak_gradient, StepContext,
};
use crate::stepper::{vi_residual, State};
use std::io::{self, Write};

/// Numerical-zero threshold for the damage support set {z = 0}; the clamp
/// projection produces exact zeros, so this only guards round-off.
pub const Z_ZERO_THRESHOLD: f64 = 1e-10;

/// Dual norms of the four discrete weak-form defects plus the constraint
/// observables. r4 is the worst violation of the variational inequality over
/// the nodal generating directions of the admissible cone.
#[derive(Debug, Clone, Default)]
pub struct ResidualReport {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub mass_dev: f64,
    pub irrev_viol: f64,
}

impl ResidualReport {
    pub fn max_r(&self) -> f64 {
        self.r1.max(self.r2).max(self.r3).max(self.r4)
    }
}

/// L^2-dual norm of a Euclidean weak-form defect vector: sqrt(sum R_i^2 / w_i).
fn dual_norm(grid: &GridDesc, defect: &[f64]) -> f64 {
    let n = grid.n_nodes();
    let mut s = 0.0;
    for comp in 0..defect.len() / n {
        for i in 0..n {
            let r = defect[comp * n + i];
            s += r * r / grid.node_weight(i);
        }
    }
    s.sqrt()
}

/// Euler-Lagrange residuals of the candidate (c, u, z) with potential mu
/// against the step context (history, frozen metric, data at k tau).
pub fn el_residuals(
    ctx: &StepContext,
    c: &[f64],
    u: &[f64],
    z: &[f64],
    mu: &[f64],
) -> ResidualReport {
    let grid = ctx.grid;
    let n = grid.n_nodes();
    let tau = ctx.params.tau;

    // r1: <c_dot, zeta>_M + a_m(mu, zeta) for all nodal zeta
    let mut r1_vec = vec![0.0; n];
    ctx.v0.stiffness_apply(mu, &mut r1_vec);
    for i in 0..n {
        r1_vec[i] += grid.node_weight(i) * (c[i] - ctx.c_prev[i]) / tau;
    }
    let r1 = dual_norm(grid, &r1_vec);

    // r2: <mu, zeta>_M - (potential-equation pairing)
    let cgrad = c_weak_gradient(ctx, c, u, z);
    let r2_vec: Vec<f64> = (0..n)
        .map(|i| grid.node_weight(i) * mu[i] - cgrad[i])
        .collect();
    let r2 = dual_norm(grid, &r2_vec);

    // r3: force balance defect on the non-Dirichlet nodes
    let mut r3_vec = u_weak_gradient(ctx, c, u, z);
    grid.zero_dirichlet(&mut r3_vec);
    let r3 = dual_norm(grid, &r3_vec);

    // r4: one-sided variational inequality over the admissible cone
    let zgrad = z_weak_gradient(ctx, c, u, z);
    let r4 = vi_residual(&zgrad, z, ctx.z_prev);

    let cons = conservation_checks(grid, c, z, ctx.z_prev, ctx.mass_target);
    ResidualReport {
        r1,
        r2,
        r3,
        r4,
        mass_dev: cons.mass_dev,
        irrev_viol: cons.irrev_viol,
    }
}

/// Per-step energies: free energy (with the H^2 term), kinetic energy, the
/// dissipation increment and the external-work increment, assembled exactly
/// as the discrete energy estimate prescribes (the boundary-velocity terms
/// come from the discrete integration-by-parts identity).
#[derive(Debug, Clone, Copy)]
pub struct EnergySnapshot {
    pub energy: f64,
    pub kinetic: f64,
    pub d_inc: f64,
    pub wext_inc: f64,
}

pub fn energy_terms(ctx: &StepContext, state: &State, mu: &[f64], beta: &[f64]) -> EnergySnapshot {
    let grid = ctx.grid;
    let mat = ctx.material;
    let n = grid.n_nodes();
    let tau = ctx.params.tau;
    let delta = ctx.params.delta;
    let mut sg = SecondGradient::new(grid);

    let energy = free_energy(grid, mat, &state.c, &state.u, &state.z)
        + 0.5 * delta * sg.form(grid, &state.u, &state.u);
    let kinetic = 0.5 * grid.mass_inner(&state.v, &state.v);

    let z_dot: Vec<f64> = (0..n).map(|i| (state.z[i] - ctx.z_prev[i]) / tau).collect();
    let c_dot: Vec<f64> = (0..n).map(|i| (state.c[i] - ctx.c_prev[i]) / tau).collect();
    let d_inc = tau
        * (grid.mass_inner(&z_dot, &z_dot)
            + delta * grid.mass_inner(&c_dot, &c_dot)
            + ctx.v0.energy_form(mu, mu));

    // External work increment:
    //   tau int W_e : eps(beta) + delta tau <A u, beta> + tau <l, v - beta>_M
    //   + <v - v^-, beta>_M
    let elastic = elastic_cells(grid, mat, &state.c, &state.u, &state.z);
    let mut eps_beta = Vec::new();
    symmetric_gradient(grid, beta, &mut eps_beta);
    let vol = grid.cell_volume();
    let mut stress_work = 0.0;
    for cell in 0..grid.n_cells() {
        stress_work += vol * elastic.sigma[cell].contract(&eps_beta[cell]);
    }
    let mut wext_inc = tau * stress_work + delta * tau * sg.form(grid, &state.u, beta);
    let v_prev: Vec<f64> = ctx
        .u_prev
        .iter()
        .zip(ctx.u_prev2)
        .map(|(a, b)| (a - b) / tau)
        .collect();
    let lv: Vec<f64> = state.v.iter().zip(beta).map(|(v, b)| v - b).collect();
    wext_inc += tau * grid.mass_inner(&ctx.load, &lv);
    let dv: Vec<f64> = state.v.iter().zip(&v_prev).map(|(a, b)| a - b).collect();
    wext_inc += grid.mass_inner(&dv, beta);

    EnergySnapshot {
        energy,
        kinetic,
        d_inc,
        wext_inc,
    }
}

/// The four discretization error terms of the energy estimate, evaluated
/// literally: bracketed W/Psi/f differences against the rate pairings.
pub fn error_terms(ctx: &StepContext, state: &State) -> [f64; 4] {
    let grid = ctx.grid;
    let mat = ctx.material;
    let n = grid.n_nodes();
    let nc = grid.n_cells();
    let vol = grid.cell_volume();
    let tau = ctx.params.tau;

    let mut c_bar = vec![0.0; nc];
    let mut z_bar = vec![0.0; nc];
    let mut cp_bar = vec![0.0; nc];
    let mut zp_bar = vec![0.0; nc];
    grid.cell_average(&state.c, &mut c_bar);
    grid.cell_average(&state.z, &mut z_bar);
    grid.cell_average(ctx.c_prev, &mut cp_bar);
    grid.cell_average(ctx.z_prev, &mut zp_bar);
    let mut eps = Vec::new();
    symmetric_gradient(grid, &state.u, &mut eps);
    let mut eps_prev = Vec::new();
    symmetric_gradient(grid, ctx.u_prev, &mut eps_prev);

    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for cell in 0..nc {
        let zb = z_bar[cell].clamp(0.0, 1.0);
        let zpb = zp_bar[cell].clamp(0.0, 1.0);
        let cur = mat.elastic_eval(c_bar[cell], &eps[cell], zb);
        // mixed-argument W evaluations, literally as printed
        let w_cnew_uold_zold = mat.elastic_eval(c_bar[cell], &eps_prev[cell], zpb).w;
        let w_cnew_uold_znew = mat.elastic_eval(c_bar[cell], &eps_prev[cell], zb).w;
        let w_cold_uold_zold = mat.elastic_eval(cp_bar[cell], &eps_prev[cell], zpb).w;
        let z_dot_bar = (z_bar[cell] - zp_bar[cell]) / tau;
        let c_dot_bar = (c_bar[cell] - cp_bar[cell]) / tau;
        e1 += vol * ((w_cnew_uold_zold - w_cnew_uold_znew) / tau + cur.w_z * z_dot_bar);
        e2 += vol * ((w_cold_uold_zold - w_cnew_uold_zold) / tau + cur.w_c * c_dot_bar);
    }

    let mut e3 = 0.0;
    let mut e4 = 0.0;
    for i in 0..n {
        let w = grid.node_weight(i);
        let c_dot = (state.c[i] - ctx.c_prev[i]) / tau;
        let z_dot = (state.z[i] - ctx.z_prev[i]) / tau;
        e3 += w
            * ((mat.chemical_energy(ctx.c_prev[i]) - mat.chemical_energy(state.c[i])) / tau
                + mat.psi_prime(state.c[i]) * c_dot);
        e4 += w
            * ((mat.alpha * (1.0 - ctx.z_prev[i]) - mat.alpha * (1.0 - state.z[i])) / tau
                + mat.f_prime() * z_dot);
    }
    [e1, e2, e3, e4]
}

/// Closed-form subgradient of the nonnegativity constraint:
/// `xi = -chi_{z=0} max(0, W_z + f'(z))` nodewise, with the cell-based W_z
/// paired back to nodes through the quadrature adjoint.
pub fn subgradient_xi(
    grid: &GridDesc,
    mat: &MaterialModel,
    c: &[f64],
    u: &[f64],
    z: &[f64],
) -> ScalarField {
    let n = grid.n_nodes();
    let elastic = elastic_cells(grid, mat, c, u, z);
    let vol = grid.cell_volume();
    let wz_cells: Vec<f64> = elastic.w_z.iter().map(|v| vol * v).collect();
    let mut wz_nodal = vec![0.0; n];
    grid.cell_average_adjoint(&wz_cells, &mut wz_nodal);
    (0..n)
        .map(|i| {
            if z[i] <= Z_ZERO_THRESHOLD {
                let drive = wz_nodal[i] / grid.node_weight(i) + mat.f_prime();
                -drive.max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConservationReport {
    /// |int c - int c0| / |int c0 + 1|
    pub mass_dev: f64,
    /// max positive part of z - z^-
    pub irrev_viol: f64,
    /// max positive part of -z
    pub lower_viol: f64,
    /// max positive part of z - 1
    pub upper_viol: f64,
}

pub fn conservation_checks(
    grid: &GridDesc,
    c: &[f64],
    z: &[f64],
    z_prev: &[f64],
    mass_target: f64,
) -> ConservationReport {
    let mass = grid.integrate(c);
    let mass_dev = (mass - mass_target).abs() / (mass_target + 1.0).abs();
    let mut irrev_viol: f64 = 0.0;
    let mut lower_viol: f64 = 0.0;
    let mut upper_viol: f64 = 0.0;
    for i in 0..z.len() {
        irrev_viol = irrev_viol.max(z[i] - z_prev[i]);
        lower_viol = lower_viol.max(-z[i]);
        upper_viol = upper_viol.max(z[i] - 1.0);
    }
    ConservationReport {
        mass_dev,
        irrev_viol: irrev_viol.max(0.0),
        lower_viol: lower_viol.max(0.0),
        upper_viol: upper_viol.max(0.0),
    }
}

/// One ledger row per accepted step; energies are instantaneous, dissipation
/// and external work cumulative, the error terms instantaneous.
#[derive(Debug, Clone, Copy)]
pub struct LedgerRow {
    pub k: usize,
    pub t: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub dissipation: f64,
    pub w_ext: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub slack: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub mass_dev: f64,
    pub irrev_viol: f64,
}

/// Running energy bookkeeping: the slack is
/// `[E(0)+K(0)+W_ext(0,t)] - [E(t)+K(t)+D(0,t)+int_0^t sum e_i ds]`,
/// nonnegative up to the accumulated solver defects.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
    pub e0: f64,
    pub k0: f64,
    cum_dissipation: f64,
    cum_wext: f64,
    cum_error: f64,
}

impl EnergyLedger {
    pub fn new(e0: f64, k0: f64) -> Self {
        let row0 = LedgerRow {
            k: 0,
            t: 0.0,
            energy: e0,
            kinetic: k0,
            dissipation: 0.0,
            w_ext: 0.0,
            e1: 0.0,
            e2: 0.0,
            e3: 0.0,
            e4: 0.0,
            slack: 0.0,
            r1: 0.0,
            r2: 0.0,
            r3: 0.0,
            r4: 0.0,
            mass_dev: 0.0,
            irrev_viol: 0.0,
        };
        EnergyLedger {
            rows: vec![row0],
            e0,
            k0,
            cum_dissipation: 0.0,
            cum_wext: 0.0,
            cum_error: 0.0,
        }
    }

    pub fn push_step(
        &mut self,
        k: usize,
        t: f64,
        snap: &EnergySnapshot,
        errs: &[f64; 4],
        resid: &ResidualReport,
        cons: &ConservationReport,
    ) {
        let tau = t / k as f64;
        self.cum_dissipation += snap.d_inc;
        self.cum_wext += snap.wext_inc;
        self.cum_error += tau * (errs[0] + errs[1] + errs[2] + errs[3]);
        let slack = (self.e0 + self.k0 + self.cum_wext)
            - (snap.energy + snap.kinetic + self.cum_dissipation + self.cum_error);
        self.rows.push(LedgerRow {
            k,
            t,
            energy: snap.energy,
            kinetic: snap.kinetic,
            dissipation: self.cum_dissipation,
            w_ext: self.cum_wext,
            e1: errs[0],
            e2: errs[1],
            e3: errs[2],
            e4: errs[3],
            slack,
            r1: resid.r1,
            r2: resid.r2,
            r3: resid.r3,
            r4: resid.r4,
            mass_dev: cons.mass_dev,
            irrev_viol: cons.irrev_viol,
        });
    }

    /// Certification tolerance tied to the initial energy scale.
    pub fn certification_tolerance(&self) -> f64 {
        1e-8 * (1.0 + (self.e0 + self.k0).abs())
    }

    pub fn worst_slack(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn dissipation_nondecreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].dissipation >= w[0].dissipation - 1e-15)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "k,t,E,K,D,W_ext,e1,e2,e3,e4,slack,r1,r2,r3,r4,mass_dev,irrev_viol"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.k,
                r.t,
                r.energy,
                r.kinetic,
                r.dissipation,
                r.w_ext,
                r.e1,
                r.e2,
                r.e3,
                r.e4,
                r.slack,
                r.r1,
                r.r2,
                r.r3,
                r.r4,
                r.mass_dev,
                r.irrev_viol
            )?;
        }
        Ok(())
    }
}

/// Violation found by [`check_energy_inequality`].
#[derive(Debug, Clone, Copy)]
pub struct EnergyViolation {
    pub step: usize,
    pub slack: f64,
}

/// Certifies `slack >= -tol` at every recorded step; returns the first
/// offending step otherwise.
pub fn check_energy_inequality(ledger: &EnergyLedger, tol: f64) -> Result<(), EnergyViolation> {
    for row in &ledger.rows {
        if row.slack < -tol {
            return Err(EnergyViolation {
                step: row.k,
                slack: row.slack,
            });
        }
    }
    Ok(())
}
