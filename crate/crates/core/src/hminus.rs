//! The mobility-weighted H^{-1}-type metric on zero-mean fields, realized by a
//! weighted Neumann elliptic solve with zero-mean normalization.
//!
//! The discrete operator is the edge-based stiffness
//! `a_m(u, v) = sum_edges w_e m_e D_e u D_e v` whose kernel is exactly the
//! constants, so the quotient construction carries over verbatim: for a
//! zero-mean right-hand side v the potential solves `a_m(phi, zeta) = <v, zeta>_M`
//! for all nodal zeta, and `<v, w>_{V_0} = <phi_v, w>_M`.

use crate::grid::{GridDesc, ScalarField};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HminusError {
    #[error("right-hand side is not zero-mean: integral = {integral:.3e} (tolerance {tol:.3e})")]
    NonZeroMean { integral: f64, tol: f64 },
    #[error("conjugate gradient budget of {iters} exhausted, residual {residual:.3e} > {tol:.3e}")]
    Budget {
        iters: usize,
        residual: f64,
        tol: f64,
    },
    #[error("weight must be strictly positive everywhere, found {0}")]
    BadWeight(f64),
}

/// Immutable weighted Neumann problem; safe for concurrent read-only use.
pub struct WeightedPoissonProblem<'g> {
    grid: &'g GridDesc,
    /// Edge mobilities: x-edges then (2D) y-edges, each with its quadrature weight
    /// already folded in as `w_e m_e / h^2`.
    edge_coeff: Vec<f64>,
    n_x_edges: usize,
    diag: Vec<f64>,
    pub tol: f64,
    pub max_iters: usize,
}

impl<'g> WeightedPoissonProblem<'g> {
    /// `weight` is the nodal mobility field; edges take the endpoint average.
    pub fn new(
        grid: &'g GridDesc,
        weight: &[f64],
        tol: f64,
        max_iters: usize,
    ) -> Result<Self, HminusError> {
        if let Some(&bad) = weight.iter().find(|w| **w <= 0.0) {
            return Err(HminusError::BadWeight(bad));
        }
        let nx = grid.nx;
        let ny = grid.ny;
        let trans_y = |j: usize| {
            if grid.dimension == 1 {
                1.0
            } else if j == 0 || j == ny - 1 {
                grid.hy / 2.0
            } else {
                grid.hy
            }
        };
        let trans_x = |i: usize| {
            if i == 0 || i == nx - 1 {
                grid.hx / 2.0
            } else {
                grid.hx
            }
        };

        let n_x_edges = (nx - 1) * ny;
        let n_y_edges = if grid.dimension == 2 {
            nx * (ny - 1)
        } else {
            0
        };
        let mut edge_coeff = Vec::with_capacity(n_x_edges + n_y_edges);
        for j in 0..ny {
            for i in 0..nx - 1 {
                let a = i + nx * j;
                let m_e = 0.5 * (weight[a] + weight[a + 1]);
                edge_coeff.push(grid.hx * trans_y(j) * m_e / (grid.hx * grid.hx));
            }
        }
        for j in 0..ny.saturating_sub(1) {
            if grid.dimension != 2 {
                break;
            }
            for i in 0..nx {
                let a = i + nx * j;
                let m_e = 0.5 * (weight[a] + weight[a + nx]);
                edge_coeff.push(grid.hy * trans_x(i) * m_e / (grid.hy * grid.hy));
            }
        }

        let mut diag = vec![0.0; grid.n_nodes()];
        let mut idx = 0;
        for j in 0..ny {
            for i in 0..nx - 1 {
                let a = i + nx * j;
                diag[a] += edge_coeff[idx];
                diag[a + 1] += edge_coeff[idx];
                idx += 1;
            }
        }
        if grid.dimension == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let a = i + nx * j;
                    diag[a] += edge_coeff[idx];
                    diag[a + nx] += edge_coeff[idx];
                    idx += 1;
                }
            }
        }

        Ok(WeightedPoissonProblem {
            grid,
            edge_coeff,
            n_x_edges,
            diag,
            tol,
            max_iters,
        })
    }

    pub fn grid(&self) -> &GridDesc {
        self.grid
    }

    /// Stiffness apply: `out = K u` with `w^T K u = a_m(u, w)`.
    pub fn stiffness_apply(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let nx = self.grid.nx;
        let mut idx = 0;
        for j in 0..self.grid.ny {
            for i in 0..nx - 1 {
                let a = i + nx * j;
                let flux = self.edge_coeff[idx] * (u[a + 1] - u[a]);
                out[a] -= flux;
                out[a + 1] += flux;
                idx += 1;
            }
        }
        if self.grid.dimension == 2 {
            for j in 0..self.grid.ny - 1 {
                for i in 0..nx {
                    let a = i + nx * j;
                    let flux = self.edge_coeff[idx] * (u[a + nx] - u[a]);
                    out[a] -= flux;
                    out[a + nx] += flux;
                    idx += 1;
                }
            }
        }
    }

    /// Weighted Dirichlet form `a_m(u, v) = <m grad u, grad v>` (edge quadrature).
    pub fn energy_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let nx = self.grid.nx;
        let mut s = 0.0;
        let mut idx = 0;
        for j in 0..self.grid.ny {
            for i in 0..nx - 1 {
                let a = i + nx * j;
                s += self.edge_coeff[idx] * (u[a + 1] - u[a]) * (v[a + 1] - v[a]);
                idx += 1;
            }
        }
        if self.grid.dimension == 2 {
            for j in 0..self.grid.ny - 1 {
                for i in 0..nx {
                    let a = i + nx * j;
                    s += self.edge_coeff[idx] * (u[a + nx] - u[a]) * (v[a + nx] - v[a]);
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, self.edge_coeff.len());
        let _ = self.n_x_edges;
        s
    }

    /// Solves `a_m(phi, zeta) = <rhs, zeta>_M` for the zero-mean potential phi.
    ///
    /// Preconditioned CG on the singular-consistent system; iterates stay in the
    /// complement of the kernel by projection inside the preconditioner.
    pub fn solve_weighted_neumann(&self, rhs: &[f64]) -> Result<ScalarField, HminusError> {
        self.solve_with_guess(rhs, None)
    }

    pub fn solve_with_guess(
        &self,
        rhs: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<ScalarField, HminusError> {
        let n = self.grid.n_nodes();
        let integral = self.grid.integrate(rhs);
        let linf = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mean_tol = 1e-9 * (1.0 + linf * self.grid.domain_volume());
        if integral.abs() > mean_tol {
            return Err(HminusError::NonZeroMean {
                integral,
                tol: mean_tol,
            });
        }

        // b = M rhs, projected onto the Euclidean complement of the kernel.
        let mut b: Vec<f64> = (0..n).map(|i| self.grid.node_weight(i) * rhs[i]).collect();
        project_sum_zero(&mut b);

        let b_norm = norm2(&b);
        if b_norm <= self.tol {
            return Ok(vec![0.0; n]);
        }

        let mut x = match guess {
            Some(g) => g.to_vec(),
            None => vec![0.0; n],
        };
        project_sum_zero(&mut x);
        let mut r = vec![0.0; n];
        self.stiffness_apply(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        project_sum_zero(&mut r);

        let precond = |r: &[f64], z: &mut Vec<f64>| {
            z.clear();
            z.extend(r.iter().zip(&self.diag).map(|(ri, di)| ri / di));
            project_sum_zero(z);
        };

        let mut z = Vec::with_capacity(n);
        precond(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];

        for iter in 0..self.max_iters {
            let res = norm2(&r);
            if res <= self.tol {
                let mut phi = x;
                let mean = self.grid.integrate(&phi) / self.grid.domain_volume();
                phi.iter_mut().for_each(|v| *v -= mean);
                return Ok(phi);
            }
            self.stiffness_apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(HminusError::Budget {
                    iters: iter,
                    residual: res,
                    tol: self.tol,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            project_sum_zero(&mut r);
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(HminusError::Budget {
            iters: self.max_iters,
            residual: norm2(&r),
            tol: self.tol,
        })
    }

    /// `<v, w>_{V_0}` via one solve and an L^2 duality pairing.
    pub fn v0_inner(&self, v: &[f64], w: &[f64]) -> Result<f64, HminusError> {
        let phi = self.solve_weighted_neumann(v)?;
        Ok(self.grid.mass_inner(&phi, w))
    }

    pub fn v0_norm_sq(&self, v: &[f64]) -> Result<f64, HminusError> {
        self.v0_inner(v, v)
    }
}

fn project_sum_zero(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
