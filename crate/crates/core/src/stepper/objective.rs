//! The incremental functional of one time step and its exact discrete
//! gradient. Every weak-form pairing used elsewhere (block solvers, residual
//! certification, energy bookkeeping) is assembled from the helpers here, so
//! the Euler-Lagrange system is the gradient of this functional by
//! construction.

use crate::grid::{
    symmetric_gradient, symmetric_gradient_adjoint, GridDesc, SecondGradient, SymTensor,
};
use crate::hminus::WeightedPoissonProblem;
use crate::material::MaterialModel;
use crate::stepper::{StepperError, StepperParams};

/// Everything one time step needs: the frozen history, the data at time
/// k*tau, and the weighted H^{-1} metric built from the previous state.
pub struct StepContext<'a> {
    pub grid: &'a GridDesc,
    pub material: &'a MaterialModel,
    pub params: &'a StepperParams,
    pub c_prev: &'a [f64],
    pub u_prev: &'a [f64],
    pub u_prev2: &'a [f64],
    pub z_prev: &'a [f64],
    /// l(k tau)
    pub load: Vec<f64>,
    /// b(k tau), global extension of the boundary displacement
    pub bdry: Vec<f64>,
    /// Weighted Neumann problem with mobility frozen at (c_prev, z_prev).
    pub v0: WeightedPoissonProblem<'a>,
    pub mass_target: f64,
}

/// Per-cell elastic quantities at one candidate point.
pub(crate) struct ElasticCells {
    pub energy: f64,
    /// Stress C(z)(eps - e*(c)) per cell (volume factor not included).
    pub sigma: Vec<SymTensor>,
    pub w_c: Vec<f64>,
    pub w_z: Vec<f64>,
}

pub(crate) fn elastic_cells(
    grid: &GridDesc,
    mat: &MaterialModel,
    c: &[f64],
    u: &[f64],
    z: &[f64],
) -> ElasticCells {
    let nc = grid.n_cells();
    let vol = grid.cell_volume();
    let mut c_bar = vec![0.0; nc];
    let mut z_bar = vec![0.0; nc];
    grid.cell_average(c, &mut c_bar);
    grid.cell_average(z, &mut z_bar);
    let mut eps = Vec::new();
    symmetric_gradient(grid, u, &mut eps);

    let mut energy = 0.0;
    let mut sigma = Vec::with_capacity(nc);
    let mut w_c = Vec::with_capacity(nc);
    let mut w_z = Vec::with_capacity(nc);
    for cell in 0..nc {
        let pt = mat.elastic_eval(c_bar[cell], &eps[cell], z_bar[cell].clamp(0.0, 1.0));
        energy += vol * pt.w;
        sigma.push(pt.w_e);
        w_c.push(pt.w_c);
        w_z.push(pt.w_z);
    }
    ElasticCells {
        energy,
        sigma,
        w_c,
        w_z,
    }
}

/// `(1/p) sum_cells vol |grad f|^p` for the scalar field f.
pub(crate) fn gradient_energy(grid: &GridDesc, f: &[f64], p: f64) -> f64 {
    let nc = grid.n_cells();
    let vol = grid.cell_volume();
    let mut g = vec![0.0; grid.dimension * nc];
    grid.gradient(f, &mut g);
    let mut total = 0.0;
    for cell in 0..nc {
        let mut norm2 = g[cell] * g[cell];
        if grid.dimension == 2 {
            norm2 += g[nc + cell] * g[nc + cell];
        }
        total += vol * norm2.powf(p / 2.0);
    }
    total / p
}

/// Accumulates the gradient of [`gradient_energy`] into `out` (Euclidean).
pub(crate) fn gradient_energy_grad(grid: &GridDesc, f: &[f64], p: f64, out: &mut [f64]) {
    let nc = grid.n_cells();
    let vol = grid.cell_volume();
    let mut g = vec![0.0; grid.dimension * nc];
    grid.gradient(f, &mut g);
    for cell in 0..nc {
        let mut norm2 = g[cell] * g[cell];
        if grid.dimension == 2 {
            norm2 += g[nc + cell] * g[nc + cell];
        }
        let factor = if p == 2.0 {
            1.0
        } else if norm2 == 0.0 {
            0.0
        } else {
            norm2.powf(p / 2.0 - 1.0)
        };
        g[cell] *= vol * factor;
        if grid.dimension == 2 {
            g[nc + cell] *= vol * factor;
        }
    }
    grid.gradient_adjoint(&g, out);
}

/// Free energy without the H^2 regularization:
/// `int (1/p)|grad z|^p + 1/2 |grad c|^2 + W + f(z) + Psi(c)`.
pub fn free_energy(grid: &GridDesc, mat: &MaterialModel, c: &[f64], u: &[f64], z: &[f64]) -> f64 {
    let elastic = elastic_cells(grid, mat, c, u, z);
    let mut nodal = 0.0;
    for i in 0..grid.n_nodes() {
        nodal += grid.node_weight(i) * (mat.alpha * (1.0 - z[i]) + mat.chemical_energy(c[i]));
    }
    gradient_energy(grid, z, mat.p) + gradient_energy(grid, c, 2.0) + elastic.energy + nodal
}

fn feasibility(ctx: &StepContext, c: &[f64], u: &[f64], z: &[f64]) -> Result<(), StepperError> {
    let grid = ctx.grid;
    let mass = grid.integrate(c);
    if (mass - ctx.mass_target).abs() > 1e-8 * (1.0 + ctx.mass_target.abs()) {
        return Err(StepperError::Infeasible {
            what: format!(
                "mean of c is {mass:.12e}, constraint requires {:.12e}",
                ctx.mass_target
            ),
        });
    }
    let n = grid.n_nodes();
    for comp in 0..grid.dimension {
        for &i in grid.dirichlet_nodes() {
            if (u[comp * n + i] - ctx.bdry[comp * n + i]).abs() > 1e-10 {
                return Err(StepperError::Infeasible {
                    what: format!("u does not match the Dirichlet datum at node {i}"),
                });
            }
        }
    }
    for i in 0..n {
        if z[i] < -1e-12 || z[i] > ctx.z_prev[i] + 1e-12 {
            return Err(StepperError::Infeasible {
                what: format!("z[{i}] = {} violates the box [0, {}]", z[i], ctx.z_prev[i]),
            });
        }
    }
    Ok(())
}

/// The incremental functional
/// `int [ (1/p)|grad z|^p + 1/2|grad c|^2 + W + f(z) + Psi(c) - l.u ] dx
///  + delta/2 <A u, u> + 1/(2 tau) ||z - z^-||^2 + 1/(2 tau^2) ||u - 2u^- + u^--||^2
///  + 1/(2 tau) ||c - c^-||^2_{V0} + delta/(2 tau) ||c - c^-||^2`,
/// with the V0 metric weighted by the previous mobility.
pub fn objective(ctx: &StepContext, c: &[f64], u: &[f64], z: &[f64]) -> Result<f64, StepperError> {
    feasibility(ctx, c, u, z)?;
    let grid = ctx.grid;
    let mat = ctx.material;
    let tau = ctx.params.tau;
    let delta = ctx.params.delta;

    let mut value = free_energy(grid, mat, c, u, z);
    value -= grid.mass_inner(&ctx.load, u);
    value += 0.5 * delta * SecondGradient::new(grid).form(grid, u, u);

    let n = grid.n_nodes();
    let mut dz2 = 0.0;
    for i in 0..n {
        let d = z[i] - ctx.z_prev[i];
        dz2 += grid.node_weight(i) * d * d;
    }
    value += dz2 / (2.0 * tau);

    let mut du2 = 0.0;
    for comp in 0..grid.dimension {
        for i in 0..n {
            let idx = comp * n + i;
            let d = u[idx] - 2.0 * ctx.u_prev[idx] + ctx.u_prev2[idx];
            du2 += grid.node_weight(i) * d * d;
        }
    }
    value += du2 / (2.0 * tau * tau);

    let dc: Vec<f64> = (0..n).map(|i| c[i] - ctx.c_prev[i]).collect();
    let mut dc2 = 0.0;
    for i in 0..n {
        dc2 += grid.node_weight(i) * dc[i] * dc[i];
    }
    value += delta * dc2 / (2.0 * tau);

    if dc.iter().any(|v| *v != 0.0) {
        let phi = ctx.v0.solve_weighted_neumann(&dc)?;
        value += grid.mass_inner(&dc, &phi) / (2.0 * tau);
    }
    Ok(value)
}

/// c-part of the weak gradient without the nonlocal rate term:
/// `K_c c + W_c-pairing + M (Psi'(c) + delta (c - c^-)/tau)` (Euclidean layout).
pub(crate) fn c_weak_gradient(ctx: &StepContext, c: &[f64], u: &[f64], z: &[f64]) -> Vec<f64> {
    let grid = ctx.grid;
    let n = grid.n_nodes();
    let mut out = vec![0.0; n];
    gradient_energy_grad(grid, c, 2.0, &mut out);
    let elastic = elastic_cells(grid, ctx.material, c, u, z);
    let vol = grid.cell_volume();
    let wc_cells: Vec<f64> = elastic.w_c.iter().map(|v| vol * v).collect();
    grid.cell_average_adjoint(&wc_cells, &mut out);
    let tau = ctx.params.tau;
    for i in 0..n {
        out[i] += grid.node_weight(i)
            * (ctx.material.psi_prime(c[i]) + ctx.params.delta * (c[i] - ctx.c_prev[i]) / tau);
    }
    out
}

/// z-part of the weak gradient: p-Laplacian pairing + W_z pairing
/// + M (f'(z) + (z - z^-)/tau).
pub(crate) fn z_weak_gradient(ctx: &StepContext, c: &[f64], u: &[f64], z: &[f64]) -> Vec<f64> {
    let grid = ctx.grid;
    let n = grid.n_nodes();
    let mut out = vec![0.0; n];
    gradient_energy_grad(grid, z, ctx.material.p, &mut out);
    let elastic = elastic_cells(grid, ctx.material, c, u, z);
    let vol = grid.cell_volume();
    let wz_cells: Vec<f64> = elastic.w_z.iter().map(|v| vol * v).collect();
    grid.cell_average_adjoint(&wz_cells, &mut out);
    let tau = ctx.params.tau;
    for i in 0..n {
        out[i] += grid.node_weight(i) * (ctx.material.f_prime() + (z[i] - ctx.z_prev[i]) / tau);
    }
    out
}

/// u-part of the weak gradient (equals the weak residual of the force
/// balance): `M dt_v_hat + W_e-pairing + delta A u - M l`.
pub(crate) fn u_weak_gradient(ctx: &StepContext, c: &[f64], u: &[f64], z: &[f64]) -> Vec<f64> {
    let grid = ctx.grid;
    let n = grid.n_nodes();
    let tau = ctx.params.tau;
    let mut out = vec![0.0; grid.dimension * n];
    let elastic = elastic_cells(grid, ctx.material, c, u, z);
    symmetric_gradient_adjoint(grid, &elastic.sigma, &mut out);
    let mut sg = SecondGradient::new(grid);
    let mut ahu = vec![0.0; grid.dimension * n];
    sg.apply(grid, u, &mut ahu);
    for comp in 0..grid.dimension {
        for i in 0..n {
            let idx = comp * n + i;
            let inertia = (u[idx] - 2.0 * ctx.u_prev[idx] + ctx.u_prev2[idx]) / (tau * tau);
            out[idx] +=
                grid.node_weight(i) * (inertia - ctx.load[idx]) + ctx.params.delta * ahu[idx];
        }
    }
    out
}

/// Exact discrete gradient of [`objective`] in each block.
pub struct GradientReport {
    /// Raw Euclidean dF/dc per node.
    pub grad_c: Vec<f64>,
    /// L^2 Riesz representative projected onto the zero-mean subspace.
    pub grad_c_projected: Vec<f64>,
    /// Raw dF/du with Dirichlet rows zeroed (the constrained directions).
    pub grad_u: Vec<f64>,
    /// Raw dF/dz.
    pub grad_z: Vec<f64>,
    /// Active-set pattern of the box 0 <= z <= z^-.
    pub active_lower: Vec<bool>,
    pub active_upper: Vec<bool>,
}

pub fn objective_gradient(
    ctx: &StepContext,
    c: &[f64],
    u: &[f64],
    z: &[f64],
) -> Result<GradientReport, StepperError> {
    feasibility(ctx, c, u, z)?;
    let grid = ctx.grid;
    let n = grid.n_nodes();
    let tau = ctx.params.tau;

    let mut grad_c = c_weak_gradient(ctx, c, u, z);
    let dc: Vec<f64> = (0..n).map(|i| c[i] - ctx.c_prev[i]).collect();
    if dc.iter().any(|v| *v != 0.0) {
        let phi = ctx.v0.solve_weighted_neumann(&dc)?;
        for i in 0..n {
            grad_c[i] += grid.node_weight(i) * phi[i] / tau;
        }
    }
    let mut grad_c_projected: Vec<f64> = (0..n).map(|i| grad_c[i] / grid.node_weight(i)).collect();
    let mean = grid.integrate(&grad_c_projected) / grid.domain_volume();
    grad_c_projected.iter_mut().for_each(|v| *v -= mean);

    let mut grad_u = u_weak_gradient(ctx, c, u, z);
    grid.zero_dirichlet(&mut grad_u);

    let grad_z = z_weak_gradient(ctx, c, u, z);
    let active_lower: Vec<bool> = z.iter().map(|&v| v <= 1e-14).collect();
    let active_upper: Vec<bool> = z
        .iter()
        .zip(ctx.z_prev)
        .map(|(&v, &zp)| v >= zp - 1e-14)
        .collect();

    Ok(GradientReport {
        grad_c,
        grad_c_projected,
        grad_u,
        grad_z,
        active_lower,
        active_upper,
    })
}
