//! Block solvers for the cyclic minimization: an exact CG solve for the
//! displacement (the u-block is a symmetric positive definite quadratic),
//! projected descent with Armijo backtracking for the concentration (affine
//! mean constraint) and the damage (box constraint with exact clamp).

use crate::grid::{
    symmetric_gradient, symmetric_gradient_adjoint, ScalarField, SecondGradient, SymTensor,
    VectorField,
};
use crate::stepper::objective::{gradient_energy, gradient_energy_grad, StepContext};
use crate::stepper::StepperError;

const STEP_UNDERFLOW: f64 = 1e-18;

/// Exact solve of the u-block: inertia mass term / tau^2 + elasticity with
/// C(z) + delta * second-gradient form, with Dirichlet lifting. Returns the
/// solution and the final Euclidean residual norm.
pub fn minimize_u_block(
    ctx: &StepContext,
    c: &[f64],
    z: &[f64],
    u_init: &[f64],
) -> Result<(VectorField, f64), StepperError> {
    let grid = ctx.grid;
    let n = grid.n_nodes();
    let nv = grid.dimension * n;
    let tau = ctx.params.tau;
    let delta = ctx.params.delta;

    // Frozen cell data: stiffness scale from z, eigenstrain stress from c.
    let nc = grid.n_cells();
    let mut c_bar = vec![0.0; nc];
    let mut z_bar = vec![0.0; nc];
    grid.cell_average(c, &mut c_bar);
    grid.cell_average(z, &mut z_bar);
    let scale: Vec<f64> = z_bar
        .iter()
        .map(|&zb| ctx.material.stiffness_scale(zb.clamp(0.0, 1.0)))
        .collect();

    let mut sg = SecondGradient::new(grid);
    let mut eps: Vec<SymTensor> = Vec::new();
    let mut sigma: Vec<SymTensor> = vec![SymTensor::default(); nc];
    let mut ah_tmp = vec![0.0; nv];

    // out = (1/tau^2) M x + E(z) x + delta A x  (full vector, all nodes)
    let mut apply = |x: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.resize(nv, 0.0);
        symmetric_gradient(grid, x, &mut eps);
        for cell in 0..nc {
            sigma[cell] = ctx.material.base_apply(&eps[cell]).scale(scale[cell]);
        }
        symmetric_gradient_adjoint(grid, &sigma, out);
        ah_tmp.fill(0.0);
        sg.apply(grid, x, &mut ah_tmp);
        for comp in 0..grid.dimension {
            for i in 0..n {
                let idx = comp * n + i;
                out[idx] += delta * ah_tmp[idx] + grid.node_weight(i) * x[idx] / (tau * tau);
            }
        }
    };

    // rhs = M l + (1/tau^2) M (2u^- - u^--) + scatter(C(z) e*(c))
    let mut rhs = vec![0.0; nv];
    let eig_sigma: Vec<SymTensor> = (0..nc)
        .map(|cell| {
            ctx.material
                .base_apply(&ctx.material.eigenstrain(c_bar[cell]))
                .scale(scale[cell])
        })
        .collect();
    symmetric_gradient_adjoint(grid, &eig_sigma, &mut rhs);
    for comp in 0..grid.dimension {
        for i in 0..n {
            let idx = comp * n + i;
            rhs[idx] += grid.node_weight(i)
                * (ctx.load[idx] + (2.0 * ctx.u_prev[idx] - ctx.u_prev2[idx]) / (tau * tau));
        }
    }

    let mut u = grid.apply_dirichlet(u_init, &ctx.bdry);
    let mut r = Vec::with_capacity(nv);
    apply(&u, &mut r);
    for i in 0..nv {
        r[i] = rhs[i] - r[i];
    }
    grid.zero_dirichlet(&mut r);

    let tol = ctx.params.linear_tol;
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = Vec::with_capacity(nv);
    for _ in 0..ctx.params.max_linear_iters {
        if rr.sqrt() <= tol {
            return Ok((u, rr.sqrt()));
        }
        apply(&p, &mut ap);
        grid.zero_dirichlet(&mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..nv {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..nv {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(StepperError::BlockBudget {
        block: "u",
        budget: ctx.params.max_linear_iters,
        residual: rr.sqrt(),
    })
}

/// Outcome of a projected-descent block solve.
pub struct DescentOut {
    pub field: ScalarField,
    pub iters: usize,
    /// Convergence measure at acceptance (M-norm of the projected gradient).
    pub residual: f64,
    /// A^{-1}(c - c^-) at the accepted point (c-block only).
    pub potential: Option<ScalarField>,
}

/// Projected descent with Armijo backtracking over the mean-constrained
/// c-block.
///
/// The descent direction is the M-projected L^2 representative of the
/// gradient; the nonlocal V0 term is advanced by linearity of the solve
/// (A^{-1}(r + s d) = A^{-1} r + s A^{-1} d), with periodic refresh solves.
pub fn minimize_c_block(
    ctx: &StepContext,
    u: &[f64],
    z: &[f64],
    c_init: &[f64],
) -> Result<DescentOut, StepperError> {
    let grid = ctx.grid;
    let mat = ctx.material;
    let n = grid.n_nodes();
    let nc = grid.n_cells();
    let vol = grid.cell_volume();
    let tau = ctx.params.tau;
    let delta = ctx.params.delta;
    let tol = ctx.params.block_tol;

    // Frozen cell data; W is quadratic in the cell average of c:
    // W(cbar) = scale/2 (q_ee - 2 cbar q_eh + cbar^2 q_hh).
    let mut z_bar = vec![0.0; nc];
    grid.cell_average(z, &mut z_bar);
    let mut eps: Vec<SymTensor> = Vec::new();
    symmetric_gradient(grid, u, &mut eps);
    let base_h = mat.base_apply(&mat.ehat);
    let q_hh = base_h.contract(&mat.ehat);
    let mut q_ee = vec![0.0; nc];
    let mut q_eh = vec![0.0; nc];
    let mut scale = vec![0.0; nc];
    for cell in 0..nc {
        let base_e = mat.base_apply(&eps[cell]);
        q_ee[cell] = base_e.contract(&eps[cell]);
        q_eh[cell] = base_e.contract(&mat.ehat);
        scale[cell] = mat.stiffness_scale(z_bar[cell].clamp(0.0, 1.0));
    }

    let mut c = c_init.to_vec();
    project_mean(grid, &mut c, ctx.mass_target);

    let mut c_bar = vec![0.0; nc];
    let partial_objective = |c: &[f64], c_bar: &mut [f64], v0_part: f64| -> f64 {
        grid.cell_average(c, c_bar);
        let mut val = gradient_energy(grid, c, 2.0) + v0_part;
        for cell in 0..nc {
            let cb = c_bar[cell];
            val += vol * 0.5 * scale[cell] * (q_ee[cell] - 2.0 * cb * q_eh[cell] + cb * cb * q_hh);
        }
        for i in 0..n {
            let dc = c[i] - ctx.c_prev[i];
            val +=
                grid.node_weight(i) * (mat.chemical_energy(c[i]) + delta * dc * dc / (2.0 * tau));
        }
        val
    };

    // phi = A^{-1}(c - c_prev), maintained by linear updates.
    let dc0: Vec<f64> = (0..n).map(|i| c[i] - ctx.c_prev[i]).collect();
    let mut phi = ctx.v0.solve_weighted_neumann(&dc0)?;
    let mut q_rr = grid.mass_inner(&dc0, &phi);

    let gradient = |c: &[f64], phi: &[f64], c_bar: &mut [f64], g: &mut Vec<f64>| {
        g.clear();
        g.resize(n, 0.0);
        gradient_energy_grad(grid, c, 2.0, g);
        grid.cell_average(c, c_bar);
        let wc: Vec<f64> = (0..nc)
            .map(|cell| vol * scale[cell] * (c_bar[cell] * q_hh - q_eh[cell]))
            .collect();
        grid.cell_average_adjoint(&wc, g);
        for i in 0..n {
            g[i] += grid.node_weight(i)
                * (mat.psi_prime(c[i]) + delta * (c[i] - ctx.c_prev[i]) / tau + phi[i] / tau);
        }
    };

    let project_direction = |g: &[f64], d: &mut Vec<f64>| {
        d.clear();
        d.extend((0..n).map(|i| -g[i] / grid.node_weight(i)));
        let mean = grid.integrate(d) / grid.domain_volume();
        d.iter_mut().for_each(|v| *v -= mean);
    };

    let mut g = Vec::new();
    let mut d = Vec::new();
    let mut f_cur = partial_objective(&c, &mut c_bar, q_rr / (2.0 * tau));
    let mut prev_step: Option<(Vec<f64>, Vec<f64>, f64)> = None; // (c_old, d_old, s_old)
    let mut since_refresh = 0usize;
    let mut last_residual = f64::INFINITY;

    for iter in 0..ctx.params.max_block_iters {
        gradient(&c, &phi, &mut c_bar, &mut g);
        project_direction(&g, &mut d);
        let dnorm2 = grid.mass_inner(&d, &d);
        let mut dnorm = dnorm2.sqrt();
        last_residual = dnorm;

        if dnorm <= tol {
            if since_refresh > 0 {
                // linear updates of phi drift; refresh before accepting
                let dc: Vec<f64> = (0..n).map(|i| c[i] - ctx.c_prev[i]).collect();
                phi = ctx.v0.solve_with_guess(&dc, Some(&phi))?;
                q_rr = grid.mass_inner(&dc, &phi);
                f_cur = partial_objective(&c, &mut c_bar, q_rr / (2.0 * tau));
                since_refresh = 0;
                gradient(&c, &phi, &mut c_bar, &mut g);
                project_direction(&g, &mut d);
                dnorm = grid.mass_inner(&d, &d).sqrt();
                if dnorm > tol {
                    continue;
                }
            }
            project_mean(grid, &mut c, ctx.mass_target);
            return Ok(DescentOut {
                field: c,
                iters: iter,
                residual: dnorm,
                potential: Some(phi),
            });
        }

        // Barzilai-Borwein trial step, safeguarded, then Armijo backtracking.
        let mut s = match &prev_step {
            Some((c_old, d_old, s_old)) => {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..n {
                    let dx = c[i] - c_old[i];
                    let dg = -(d[i] - d_old[i]);
                    num += grid.node_weight(i) * dx * dx;
                    den += grid.node_weight(i) * dx * dg;
                }
                if den > 0.0 && num > 0.0 {
                    (num / den).clamp(1e-12, 1e8)
                } else {
                    (*s_old * 2.0).clamp(1e-12, 1e8)
                }
            }
            None => 1.0 / (1.0 + dnorm),
        };

        let psi_d = ctx.v0.solve_weighted_neumann(&d)?;
        let q_rd = grid.mass_inner(&d, &phi);
        let q_dd = grid.mass_inner(&d, &psi_d);
        let slope = -(dnorm * dnorm); // <G, d> in the Euclidean pairing

        let c_old = c.clone();
        let mut accepted = false;
        let mut trial = vec![0.0; n];
        // Armijo cannot certify decreases below the f64 resolution of the
        // objective; allow that much slack so the endgame does not stall.
        let noise_floor = 4.0 * f64::EPSILON * (1.0 + f_cur.abs());
        while s >= STEP_UNDERFLOW {
            for i in 0..n {
                trial[i] = c_old[i] + s * d[i];
            }
            let v0_part = (q_rr + 2.0 * s * q_rd + s * s * q_dd) / (2.0 * tau);
            let f_trial = partial_objective(&trial, &mut c_bar, v0_part);
            if f_trial <= f_cur + ctx.params.armijo * s * slope + noise_floor {
                c.copy_from_slice(&trial);
                f_cur = f_trial;
                q_rr += 2.0 * s * q_rd + s * s * q_dd;
                for i in 0..n {
                    phi[i] += s * psi_d[i];
                }
                prev_step = Some((c_old.clone(), d.clone(), s));
                accepted = true;
                break;
            }
            s *= ctx.params.backtrack;
        }
        if !accepted {
            return Err(StepperError::LineSearch {
                block: "c",
                iters: iter,
                residual: dnorm,
            });
        }
        since_refresh += 1;
        if since_refresh >= 25 {
            let dc: Vec<f64> = (0..n).map(|i| c[i] - ctx.c_prev[i]).collect();
            phi = ctx.v0.solve_with_guess(&dc, Some(&phi))?;
            q_rr = grid.mass_inner(&dc, &phi);
            f_cur = partial_objective(&c, &mut c_bar, q_rr / (2.0 * tau));
            since_refresh = 0;
        }
    }
    Err(StepperError::BlockBudget {
        block: "c",
        budget: ctx.params.max_block_iters,
        residual: last_residual,
    })
}

/// Projected gradient descent with backtracking on the z-block; the
/// projection is the nodewise clamp to [0, z^-], so the constraints hold in
/// exact arithmetic.
pub fn minimize_z_block(
    ctx: &StepContext,
    c: &[f64],
    u: &[f64],
    z_init: &[f64],
) -> Result<DescentOut, StepperError> {
    let grid = ctx.grid;
    let mat = ctx.material;
    let n = grid.n_nodes();
    let nc = grid.n_cells();
    let vol = grid.cell_volume();
    let tau = ctx.params.tau;
    let tol = ctx.params.block_tol;

    // W is affine in z through the stiffness modulation: per cell
    // W = stiffness_scale(z_bar) * q_half with q_half frozen during the block.
    let mut c_bar = vec![0.0; nc];
    grid.cell_average(c, &mut c_bar);
    let mut eps: Vec<SymTensor> = Vec::new();
    symmetric_gradient(grid, u, &mut eps);
    let q_half: Vec<f64> = (0..nc)
        .map(|cell| {
            let mismatch = eps[cell].sub(&mat.eigenstrain(c_bar[cell]));
            0.5 * mat.base_apply(&mismatch).contract(&mismatch)
        })
        .collect();
    // weak pairing of W_z against nodal tests
    let slope = mat.stiffness_scale_prime();
    let wz_pair: Vec<f64> = q_half.iter().map(|q| vol * slope * q).collect();
    let mut wz_nodal = vec![0.0; n];
    grid.cell_average_adjoint(&wz_pair, &mut wz_nodal);

    let mut z: Vec<f64> = z_init
        .iter()
        .zip(ctx.z_prev)
        .map(|(&v, &zp)| v.clamp(0.0, zp))
        .collect();

    let mut z_bar = vec![0.0; nc];
    let partial_objective = |z: &[f64], z_bar: &mut [f64]| -> f64 {
        let mut val = gradient_energy(grid, z, mat.p);
        grid.cell_average(z, z_bar);
        for cell in 0..nc {
            val += vol * mat.stiffness_scale(z_bar[cell].clamp(0.0, 1.0)) * q_half[cell];
        }
        for i in 0..n {
            let dz = z[i] - ctx.z_prev[i];
            val += grid.node_weight(i) * (mat.alpha * (1.0 - z[i]) + dz * dz / (2.0 * tau));
        }
        val
    };

    let gradient = |z: &[f64], g: &mut Vec<f64>| {
        g.clear();
        g.resize(n, 0.0);
        gradient_energy_grad(grid, z, mat.p, g);
        for i in 0..n {
            g[i] +=
                wz_nodal[i] + grid.node_weight(i) * (mat.f_prime() + (z[i] - ctx.z_prev[i]) / tau);
        }
    };

    let mut g = Vec::new();
    let mut f_cur = partial_objective(&z, &mut z_bar);
    let mut s_prev = 1.0f64;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (z_old, riesz_old)
    let mut last_residual = f64::INFINITY;

    for iter in 0..ctx.params.max_block_iters {
        gradient(&z, &mut g);
        let riesz: Vec<f64> = (0..n).map(|i| g[i] / grid.node_weight(i)).collect();

        // natural-map residual with unit reference step
        let mut pg2 = 0.0;
        for i in 0..n {
            let proj = (z[i] - riesz[i]).clamp(0.0, ctx.z_prev[i]);
            let d = z[i] - proj;
            pg2 += grid.node_weight(i) * d * d;
        }
        let vi = vi_residual(&g, &z, ctx.z_prev);
        last_residual = pg2.sqrt().max(vi);
        if pg2.sqrt() <= tol && vi <= tol {
            return Ok(DescentOut {
                field: z,
                iters: iter,
                residual: pg2.sqrt().max(vi),
                potential: None,
            });
        }

        let mut s = match &prev {
            Some((z_old, r_old)) => {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..n {
                    let dx = z[i] - z_old[i];
                    let dg = riesz[i] - r_old[i];
                    num += grid.node_weight(i) * dx * dx;
                    den += grid.node_weight(i) * dx * dg;
                }
                if den > 0.0 && num > 0.0 {
                    (num / den).clamp(1e-12, 1e8)
                } else {
                    (s_prev * 2.0).clamp(1e-12, 1e8)
                }
            }
            None => 1.0,
        };

        let z_old = z.clone();
        let mut accepted = false;
        let mut stationary = false;
        let mut trial = vec![0.0; n];
        let noise_floor = 4.0 * f64::EPSILON * (1.0 + f_cur.abs());
        while s >= STEP_UNDERFLOW {
            for i in 0..n {
                trial[i] = (z_old[i] - s * riesz[i]).clamp(0.0, ctx.z_prev[i]);
            }
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - z_old[i])).sum();
            if decrease >= -1e-300 {
                // the projection blocks every admissible move: first-order
                // stationary up to round-off
                stationary = true;
                break;
            }
            let f_trial = partial_objective(&trial, &mut z_bar);
            if f_trial <= f_cur + ctx.params.armijo * decrease + noise_floor {
                z.copy_from_slice(&trial);
                f_cur = f_trial;
                prev = Some((z_old.clone(), riesz.clone()));
                s_prev = s;
                accepted = true;
                break;
            }
            s *= ctx.params.backtrack;
        }
        if stationary {
            return Ok(DescentOut {
                field: z,
                iters: iter,
                residual: pg2.sqrt().max(vi),
                potential: None,
            });
        }
        if !accepted {
            return Err(StepperError::LineSearch {
                block: "z",
                iters: iter,
                residual: pg2.sqrt(),
            });
        }
    }
    Err(StepperError::BlockBudget {
        block: "z",
        budget: ctx.params.max_block_iters,
        residual: last_residual,
    })
}

/// Static force balance `div W_e + delta A u = l` with Dirichlet data: the
/// inertia-free elastic solve used to initialize scenarios at mechanical
/// equilibrium. The Dirichlet set pins rigid motions, so CG applies.
pub fn static_displacement(
    grid: &crate::grid::GridDesc,
    material: &crate::material::MaterialModel,
    delta: f64,
    c: &[f64],
    z: &[f64],
    bdry: &[f64],
    load: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<VectorField, StepperError> {
    let n = grid.n_nodes();
    let nv = grid.dimension * n;
    let nc = grid.n_cells();
    let mut c_bar = vec![0.0; nc];
    let mut z_bar = vec![0.0; nc];
    grid.cell_average(c, &mut c_bar);
    grid.cell_average(z, &mut z_bar);
    let scale: Vec<f64> = z_bar
        .iter()
        .map(|&zb| material.stiffness_scale(zb.clamp(0.0, 1.0)))
        .collect();

    let mut sg = SecondGradient::new(grid);
    let mut eps: Vec<SymTensor> = Vec::new();
    let mut sigma: Vec<SymTensor> = vec![SymTensor::default(); nc];
    let mut ah_tmp = vec![0.0; nv];
    let mut apply = |x: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.resize(nv, 0.0);
        symmetric_gradient(grid, x, &mut eps);
        for cell in 0..nc {
            sigma[cell] = material.base_apply(&eps[cell]).scale(scale[cell]);
        }
        symmetric_gradient_adjoint(grid, &sigma, out);
        ah_tmp.fill(0.0);
        sg.apply(grid, x, &mut ah_tmp);
        for idx in 0..nv {
            out[idx] += delta * ah_tmp[idx];
        }
    };

    let mut rhs = vec![0.0; nv];
    let eig_sigma: Vec<SymTensor> = (0..nc)
        .map(|cell| {
            material
                .base_apply(&material.eigenstrain(c_bar[cell]))
                .scale(scale[cell])
        })
        .collect();
    symmetric_gradient_adjoint(grid, &eig_sigma, &mut rhs);
    for comp in 0..grid.dimension {
        for i in 0..n {
            rhs[comp * n + i] += grid.node_weight(i) * load[comp * n + i];
        }
    }

    let mut u = grid.apply_dirichlet(&vec![0.0; nv], bdry);
    let mut r = Vec::with_capacity(nv);
    apply(&u, &mut r);
    for i in 0..nv {
        r[i] = rhs[i] - r[i];
    }
    grid.zero_dirichlet(&mut r);
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = Vec::with_capacity(nv);
    for _ in 0..max_iters {
        if rr.sqrt() <= tol {
            return Ok(u);
        }
        apply(&p, &mut ap);
        grid.zero_dirichlet(&mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..nv {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..nv {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(StepperError::BlockBudget {
        block: "static u",
        budget: max_iters,
        residual: rr.sqrt(),
    })
}

/// Worst violation of the one-sided variational inequality over the nodal
/// generating directions of the admissible cone: for each node the extreme
/// admissible tests are `-z_i e_i` and `(z^-_i - z_i) e_i`.
pub fn vi_residual(g: &[f64], z: &[f64], z_prev: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..g.len() {
        worst = worst.max(g[i] * z[i]); // pairing with -z_i e_i is -g_i z_i
        worst = worst.max(-g[i] * (z_prev[i] - z[i]));
    }
    worst
}

/// mu = -A^{-1}((c - c^-)/tau) + lambda, the additive constant fixed by
/// testing the potential equation with the constant test function.
pub fn recover_mu(
    ctx: &StepContext,
    c: &[f64],
    u: &[f64],
    z: &[f64],
) -> Result<ScalarField, StepperError> {
    let grid = ctx.grid;
    let n = grid.n_nodes();
    let tau = ctx.params.tau;
    let c_dot: Vec<f64> = (0..n).map(|i| (c[i] - ctx.c_prev[i]) / tau).collect();
    let phi = ctx.v0.solve_weighted_neumann(&c_dot)?;

    let elastic = crate::stepper::objective::elastic_cells(grid, ctx.material, c, u, z);
    let vol = grid.cell_volume();
    let mut rhs_mean: f64 = elastic.w_c.iter().map(|v| vol * v).sum();
    for i in 0..n {
        rhs_mean +=
            grid.node_weight(i) * (ctx.material.psi_prime(c[i]) + ctx.params.delta * c_dot[i]);
    }
    let lambda = rhs_mean / grid.domain_volume();
    Ok((0..n).map(|i| -phi[i] + lambda).collect())
}

pub(crate) fn project_mean(grid: &crate::grid::GridDesc, c: &mut [f64], target: f64) {
    let shift = (target - grid.integrate(c)) / grid.domain_volume();
    c.iter_mut().for_each(|v| *v += shift);
}
