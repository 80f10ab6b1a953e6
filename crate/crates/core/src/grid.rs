//! Structured tensor-product grids in 1D/2D with trapezoidal quadrature,
//! cell-centered difference operators and boundary tagging.

use thiserror::Error;

/// Boundary condition kind attached to a boundary node or face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Axis-aligned face of the box domain. `Bottom`/`Top` exist only in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: need at least 3 nodes, got {nodes}")]
    TooFewNodes { axis: usize, nodes: usize },
    #[error("axis {axis}: length must be positive, got {length}")]
    BadLength { axis: usize, length: f64 },
    #[error("the Dirichlet boundary is empty; at least one face must be Dirichlet")]
    EmptyDirichlet,
    #[error("field has {got} entries, grid expects {expect}")]
    FieldSize { got: usize, expect: usize },
}

/// Requested grid: box `[0,Lx] x [0,Ly]`, node counts per axis and one tag per face.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub dimension: usize,
    pub lengths: [f64; 2],
    pub nodes: [usize; 2],
    /// Tags in order Left, Right, Bottom, Top; the last two are ignored in 1D.
    pub face_tags: [BoundaryTag; 4],
}

impl GridConfig {
    pub fn line(length: f64, nodes: usize, left: BoundaryTag, right: BoundaryTag) -> Self {
        GridConfig {
            dimension: 1,
            lengths: [length, 1.0],
            nodes: [nodes, 1],
            face_tags: [left, right, BoundaryTag::Neumann, BoundaryTag::Neumann],
        }
    }

    pub fn rect(lengths: [f64; 2], nodes: [usize; 2], face_tags: [BoundaryTag; 4]) -> Self {
        GridConfig {
            dimension: 2,
            lengths,
            nodes,
            face_tags,
        }
    }
}

/// Structured grid description. Nodes are numbered lexicographically,
/// x fastest: `idx = ix + nx*iy`. Cells likewise with `nx-1` per row.
#[derive(Debug, Clone)]
pub struct GridDesc {
    pub dimension: usize,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub lengths: [f64; 2],
    coords: Vec<[f64; 2]>,
    /// `None` for interior nodes, tag for boundary nodes. A node touching any
    /// Dirichlet face is Dirichlet.
    boundary: Vec<Option<BoundaryTag>>,
    dirichlet_nodes: Vec<usize>,
    /// Trapezoidal quadrature weight per node (tensor product).
    weights: Vec<f64>,
    face_tags: [BoundaryTag; 4],
}

/// Scalar nodal field: one value per node.
pub type ScalarField = Vec<f64>;
/// Vector nodal field, component-planar layout: `f[comp*n_nodes + node]`.
pub type VectorField = Vec<f64>;

pub fn build_grid(config: &GridConfig) -> Result<GridDesc, GridError> {
    let dim = config.dimension;
    if dim != 1 && dim != 2 {
        return Err(GridError::BadDimension(dim));
    }
    for axis in 0..dim {
        if config.nodes[axis] < 3 {
            return Err(GridError::TooFewNodes {
                axis,
                nodes: config.nodes[axis],
            });
        }
        if config.lengths[axis] <= 0.0 {
            return Err(GridError::BadLength {
                axis,
                length: config.lengths[axis],
            });
        }
    }
    let n_faces = if dim == 1 { 2 } else { 4 };
    if !config.face_tags[..n_faces]
        .iter()
        .any(|t| *t == BoundaryTag::Dirichlet)
    {
        return Err(GridError::EmptyDirichlet);
    }

    let nx = config.nodes[0];
    let ny = if dim == 2 { config.nodes[1] } else { 1 };
    let hx = config.lengths[0] / (nx - 1) as f64;
    let hy = if dim == 2 {
        config.lengths[1] / (ny - 1) as f64
    } else {
        1.0
    };

    let mut coords = Vec::with_capacity(nx * ny);
    let mut boundary = vec![None; nx * ny];
    let mut weights = vec![0.0; nx * ny];
    let wx = |i: usize| if i == 0 || i == nx - 1 { hx / 2.0 } else { hx };
    let wy = |j: usize| {
        if dim == 1 {
            1.0
        } else if j == 0 || j == ny - 1 {
            hy / 2.0
        } else {
            hy
        }
    };
    for iy in 0..ny {
        for ix in 0..nx {
            coords.push([ix as f64 * hx, iy as f64 * hy]);
            let idx = ix + nx * iy;
            weights[idx] = wx(ix) * wy(iy);

            let mut faces = Vec::with_capacity(2);
            if ix == 0 {
                faces.push(Face::Left);
            }
            if ix == nx - 1 {
                faces.push(Face::Right);
            }
            if dim == 2 {
                if iy == 0 {
                    faces.push(Face::Bottom);
                }
                if iy == ny - 1 {
                    faces.push(Face::Top);
                }
            }
            if !faces.is_empty() {
                let dirichlet = faces
                    .iter()
                    .any(|f| face_tag(&config.face_tags, *f) == BoundaryTag::Dirichlet);
                boundary[idx] = Some(if dirichlet {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::Neumann
                });
            }
        }
    }
    let dirichlet_nodes = boundary
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == Some(BoundaryTag::Dirichlet))
        .map(|(i, _)| i)
        .collect();

    Ok(GridDesc {
        dimension: dim,
        nx,
        ny,
        hx,
        hy,
        lengths: config.lengths,
        coords,
        boundary,
        dirichlet_nodes,
        weights,
        face_tags: config.face_tags,
    })
}

fn face_tag(tags: &[BoundaryTag; 4], face: Face) -> BoundaryTag {
    match face {
        Face::Left => tags[0],
        Face::Right => tags[1],
        Face::Bottom => tags[2],
        Face::Top => tags[3],
    }
}

impl GridDesc {
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_cells(&self) -> usize {
        if self.dimension == 1 {
            self.nx - 1
        } else {
            (self.nx - 1) * (self.ny - 1)
        }
    }

    pub fn cell_volume(&self) -> f64 {
        if self.dimension == 1 {
            self.hx
        } else {
            self.hx * self.hy
        }
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    pub fn node_weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain_volume(&self) -> f64 {
        let mut v = self.lengths[0];
        if self.dimension == 2 {
            v *= self.lengths[1];
        }
        v
    }

    pub fn boundary_tag(&self, node: usize) -> Option<BoundaryTag> {
        self.boundary[node]
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet_nodes
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.boundary[node] == Some(BoundaryTag::Dirichlet)
    }

    /// Outer unit normal of a face.
    pub fn normal(&self, face: Face) -> [f64; 2] {
        match face {
            Face::Left => [-1.0, 0.0],
            Face::Right => [1.0, 0.0],
            Face::Bottom => [0.0, -1.0],
            Face::Top => [0.0, 1.0],
        }
    }

    pub fn face_tag(&self, face: Face) -> BoundaryTag {
        face_tag(&self.face_tags, face)
    }

    pub fn check_scalar(&self, f: &[f64]) -> Result<(), GridError> {
        if f.len() != self.n_nodes() {
            return Err(GridError::FieldSize {
                got: f.len(),
                expect: self.n_nodes(),
            });
        }
        Ok(())
    }

    pub fn check_vector(&self, f: &[f64]) -> Result<(), GridError> {
        let expect = self.dimension * self.n_nodes();
        if f.len() != expect {
            return Err(GridError::FieldSize {
                got: f.len(),
                expect,
            });
        }
        Ok(())
    }

    /// Trapezoidal quadrature of a nodal field over the domain.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_nodes());
        f.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Mass-weighted inner product of nodal fields (vector fields sum over components).
    pub fn mass_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        debug_assert_eq!(a.len() % self.n_nodes(), 0);
        let n = self.n_nodes();
        let mut s = 0.0;
        for comp in 0..a.len() / n {
            for i in 0..n {
                s += self.weights[i] * a[comp * n + i] * b[comp * n + i];
            }
        }
        s
    }

    /// Cell corner node indices: 2 in 1D, 4 in 2D (x fastest, then y).
    pub fn cell_corners(&self, cell: usize) -> ([usize; 4], usize) {
        if self.dimension == 1 {
            ([cell, cell + 1, 0, 0], 2)
        } else {
            let cx = self.nx - 1;
            let ix = cell % cx;
            let iy = cell / cx;
            let i0 = ix + self.nx * iy;
            ([i0, i0 + 1, i0 + self.nx, i0 + self.nx + 1], 4)
        }
    }

    /// Cell-centered first differences of a scalar field.
    /// Output layout: `out[axis*n_cells + cell]`.
    pub fn gradient(&self, f: &[f64], out: &mut [f64]) {
        let nc = self.n_cells();
        debug_assert_eq!(out.len(), self.dimension * nc);
        if self.dimension == 1 {
            for c in 0..nc {
                out[c] = (f[c + 1] - f[c]) / self.hx;
            }
        } else {
            for c in 0..nc {
                let ([i0, i1, i2, i3], _) = self.cell_corners(c);
                out[c] = (f[i1] - f[i0] + f[i3] - f[i2]) / (2.0 * self.hx);
                out[nc + c] = (f[i2] - f[i0] + f[i3] - f[i1]) / (2.0 * self.hy);
            }
        }
    }

    /// Adjoint of `gradient`: accumulates `out += G^T q` for a per-cell vector `q`
    /// (same layout as `gradient` output). Quadrature weights are the caller's business.
    pub fn gradient_adjoint(&self, q: &[f64], out: &mut [f64]) {
        let nc = self.n_cells();
        debug_assert_eq!(q.len(), self.dimension * nc);
        debug_assert_eq!(out.len(), self.n_nodes());
        if self.dimension == 1 {
            for c in 0..nc {
                let g = q[c] / self.hx;
                out[c] -= g;
                out[c + 1] += g;
            }
        } else {
            for c in 0..nc {
                let ([i0, i1, i2, i3], _) = self.cell_corners(c);
                let gx = q[c] / (2.0 * self.hx);
                let gy = q[nc + c] / (2.0 * self.hy);
                out[i0] += -gx - gy;
                out[i1] += gx - gy;
                out[i2] += -gx + gy;
                out[i3] += gx + gy;
            }
        }
    }

    /// Corner average of a nodal field per cell.
    pub fn cell_average(&self, f: &[f64], out: &mut [f64]) {
        let nc = self.n_cells();
        debug_assert_eq!(out.len(), nc);
        for c in 0..nc {
            let (corners, n) = self.cell_corners(c);
            out[c] = corners[..n].iter().map(|&i| f[i]).sum::<f64>() / n as f64;
        }
    }

    /// Adjoint of `cell_average`: `out += P^T q`.
    pub fn cell_average_adjoint(&self, q: &[f64], out: &mut [f64]) {
        let nc = self.n_cells();
        for c in 0..nc {
            let (corners, n) = self.cell_corners(c);
            let share = q[c] / n as f64;
            for &i in &corners[..n] {
                out[i] += share;
            }
        }
    }

    /// Overwrites Dirichlet entries of `u` with `b`; interior untouched.
    pub fn apply_dirichlet(&self, u: &[f64], b: &[f64]) -> VectorField {
        let n = self.n_nodes();
        let mut out = u.to_vec();
        for comp in 0..self.dimension {
            for &i in &self.dirichlet_nodes {
                out[comp * n + i] = b[comp * n + i];
            }
        }
        out
    }

    /// Zeroes Dirichlet entries in place (restriction to the test space).
    pub fn zero_dirichlet(&self, u: &mut [f64]) {
        let n = self.n_nodes();
        for comp in 0..u.len() / n {
            for &i in &self.dirichlet_nodes {
                u[comp * n + i] = 0.0;
            }
        }
    }
}

/// Symmetric n x n matrix (n <= 2) with components (xx, yy, xy).
/// In 1D only `xx` is meaningful and the others stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl SymTensor {
    pub fn scalar(xx: f64) -> Self {
        SymTensor {
            xx,
            yy: 0.0,
            xy: 0.0,
        }
    }

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        SymTensor { xx, yy, xy }
    }

    /// Frobenius double contraction `a : b` (off-diagonal counted twice).
    pub fn contract(&self, other: &SymTensor) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    pub fn trace(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx
        } else {
            self.xx + self.yy
        }
    }

    pub fn scale(&self, s: f64) -> SymTensor {
        SymTensor {
            xx: s * self.xx,
            yy: s * self.yy,
            xy: s * self.xy,
        }
    }

    pub fn sub(&self, other: &SymTensor) -> SymTensor {
        SymTensor {
            xx: self.xx - other.xx,
            yy: self.yy - other.yy,
            xy: self.xy - other.xy,
        }
    }

    pub fn identity(dim: usize) -> SymTensor {
        SymTensor {
            xx: 1.0,
            yy: if dim == 2 { 1.0 } else { 0.0 },
            xy: 0.0,
        }
    }
}

/// Per-cell symmetrized gradient of a vector field: eps(u) = (grad u + grad u^T)/2.
pub fn symmetric_gradient(grid: &GridDesc, u: &[f64], out: &mut Vec<SymTensor>) {
    let nc = grid.n_cells();
    let n = grid.n_nodes();
    out.clear();
    out.resize(nc, SymTensor::default());
    let mut g = vec![0.0; grid.dimension * nc];
    grid.gradient(&u[..n], &mut g);
    if grid.dimension == 1 {
        for c in 0..nc {
            out[c].xx = g[c];
        }
    } else {
        for c in 0..nc {
            out[c].xx = g[c];
            out[c].xy = 0.5 * g[nc + c];
        }
        grid.gradient(&u[n..], &mut g);
        for c in 0..nc {
            out[c].yy = g[nc + c];
            out[c].xy += 0.5 * g[c];
        }
    }
}

/// Scatter of a per-cell stress against eps(test): `out += sum_c vol * sigma_c : eps(phi)`.
/// `out` has vector-field layout.
pub fn symmetric_gradient_adjoint(grid: &GridDesc, sigma: &[SymTensor], out: &mut [f64]) {
    let nc = grid.n_cells();
    let n = grid.n_nodes();
    let vol = grid.cell_volume();
    let mut q = vec![0.0; grid.dimension * nc];
    // x-component test: pairs with (sigma_xx, sigma_xy)
    for c in 0..nc {
        q[c] = vol * sigma[c].xx;
        if grid.dimension == 2 {
            q[nc + c] = vol * sigma[c].xy;
        }
    }
    grid.gradient_adjoint(&q, &mut out[..n]);
    if grid.dimension == 2 {
        for c in 0..nc {
            q[c] = vol * sigma[c].xy;
            q[nc + c] = vol * sigma[c].yy;
        }
        let (_, tail) = out.split_at_mut(n);
        grid.gradient_adjoint(&q, tail);
    }
}

/// Discrete second derivative along an axis: central inside, one-sided (shifted
/// central) at the two boundary layers.
fn second_diff_axis(grid: &GridDesc, axis: usize, f: &[f64], out: &mut [f64]) {
    let (n_axis, h, stride, n_other) = axis_layout(grid, axis);
    let h2 = h * h;
    for other in 0..n_other {
        let base = other_base(grid, axis, other);
        let at = |i: usize| f[base + i * stride];
        for i in 0..n_axis {
            let j = i.clamp(1, n_axis - 2);
            out[base + i * stride] = (at(j - 1) - 2.0 * at(j) + at(j + 1)) / h2;
        }
    }
}

fn second_diff_axis_transpose(grid: &GridDesc, axis: usize, q: &[f64], out: &mut [f64]) {
    let (n_axis, h, stride, n_other) = axis_layout(grid, axis);
    let h2 = h * h;
    for other in 0..n_other {
        let base = other_base(grid, axis, other);
        for i in 0..n_axis {
            let j = i.clamp(1, n_axis - 2);
            let v = q[base + i * stride] / h2;
            out[base + (j - 1) * stride] += v;
            out[base + j * stride] -= 2.0 * v;
            out[base + (j + 1) * stride] += v;
        }
    }
}

/// First difference along an axis: central inside, one-sided at the boundary.
fn first_diff_axis(grid: &GridDesc, axis: usize, f: &[f64], out: &mut [f64]) {
    let (n_axis, h, stride, n_other) = axis_layout(grid, axis);
    for other in 0..n_other {
        let base = other_base(grid, axis, other);
        let at = |i: usize| f[base + i * stride];
        for i in 0..n_axis {
            out[base + i * stride] = if i == 0 {
                (at(1) - at(0)) / h
            } else if i == n_axis - 1 {
                (at(n_axis - 1) - at(n_axis - 2)) / h
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            };
        }
    }
}

fn first_diff_axis_transpose(grid: &GridDesc, axis: usize, q: &[f64], out: &mut [f64]) {
    let (n_axis, h, stride, n_other) = axis_layout(grid, axis);
    for other in 0..n_other {
        let base = other_base(grid, axis, other);
        for i in 0..n_axis {
            let v = q[base + i * stride];
            if i == 0 {
                out[base + stride] += v / h;
                out[base] -= v / h;
            } else if i == n_axis - 1 {
                out[base + (n_axis - 1) * stride] += v / h;
                out[base + (n_axis - 2) * stride] -= v / h;
            } else {
                out[base + (i + 1) * stride] += v / (2.0 * h);
                out[base + (i - 1) * stride] -= v / (2.0 * h);
            }
        }
    }
}

fn axis_layout(grid: &GridDesc, axis: usize) -> (usize, f64, usize, usize) {
    if axis == 0 {
        (grid.nx, grid.hx, 1, grid.ny)
    } else {
        (grid.ny, grid.hy, grid.nx, grid.nx)
    }
}

fn other_base(grid: &GridDesc, axis: usize, other: usize) -> usize {
    if axis == 0 {
        other * grid.nx
    } else {
        other
    }
}

/// Workspace for the H^2 second-gradient form to avoid reallocation in hot loops.
pub struct SecondGradient {
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
}

impl SecondGradient {
    pub fn new(grid: &GridDesc) -> Self {
        let n = grid.n_nodes();
        SecondGradient {
            buf_a: vec![0.0; n],
            buf_b: vec![0.0; n],
        }
    }

    /// Bilinear form value `sum_{i,j,k} <D_ij u_k, D_ij w_k>_M`, where D_ii are
    /// second differences, the mixed derivative is the composition D_y D_x
    /// (counted twice), and M carries the trapezoidal node weights. Symmetric
    /// and positive semi-definite by construction.
    pub fn form(&mut self, grid: &GridDesc, u: &[f64], w: &[f64]) -> f64 {
        let n = grid.n_nodes();
        let mut total = 0.0;
        for comp in 0..grid.dimension {
            let uc = &u[comp * n..(comp + 1) * n];
            let wc = &w[comp * n..(comp + 1) * n];
            for axis in 0..grid.dimension {
                second_diff_axis(grid, axis, uc, &mut self.buf_a);
                second_diff_axis(grid, axis, wc, &mut self.buf_b);
                total += grid.mass_inner(&self.buf_a, &self.buf_b);
            }
            if grid.dimension == 2 {
                let mut tmp = vec![0.0; n];
                first_diff_axis(grid, 0, uc, &mut tmp);
                first_diff_axis(grid, 1, &tmp.clone(), &mut tmp);
                let mut tmp_w = vec![0.0; n];
                first_diff_axis(grid, 0, wc, &mut tmp_w);
                first_diff_axis(grid, 1, &tmp_w.clone(), &mut tmp_w);
                total += 2.0 * grid.mass_inner(&tmp, &tmp_w);
            }
        }
        total
    }

    /// Operator apply: `out += A u` in the Euclidean sense, i.e.
    /// `w^T out = form(u, w)` for every `w`.
    pub fn apply(&mut self, grid: &GridDesc, u: &[f64], out: &mut [f64]) {
        let n = grid.n_nodes();
        for comp in 0..grid.dimension {
            let uc = &u[comp * n..(comp + 1) * n];
            let oc = &mut out[comp * n..(comp + 1) * n];
            for axis in 0..grid.dimension {
                second_diff_axis(grid, axis, uc, &mut self.buf_a);
                for i in 0..n {
                    self.buf_a[i] *= grid.weights()[i];
                }
                second_diff_axis_transpose(grid, axis, &self.buf_a, oc);
            }
            if grid.dimension == 2 {
                first_diff_axis(grid, 0, uc, &mut self.buf_a);
                self.buf_b.copy_from_slice(&self.buf_a);
                first_diff_axis(grid, 1, &self.buf_b, &mut self.buf_a);
                for i in 0..n {
                    self.buf_a[i] *= 2.0 * grid.weights()[i];
                }
                self.buf_b.fill(0.0);
                first_diff_axis_transpose(grid, 1, &self.buf_a, &mut self.buf_b);
                first_diff_axis_transpose(grid, 0, &self.buf_b, oc);
            }
        }
    }
}

/// Convenience wrapper around [`SecondGradient::form`].
pub fn second_gradient_form(grid: &GridDesc, u: &[f64], w: &[f64]) -> f64 {
    SecondGradient::new(grid).form(grid, u, w)
}

/// `(sum_cells vol |grad f|^p)^{1/p}`, the L^p norm of the cell gradient.
pub fn lp_gradient_norm(grid: &GridDesc, f: &[f64], p: f64) -> f64 {
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
    total.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_grid(nodes: usize) -> GridDesc {
        build_grid(&GridConfig::line(
            1.0,
            nodes,
            BoundaryTag::Dirichlet,
            BoundaryTag::Neumann,
        ))
        .unwrap()
    }

    #[test]
    fn build_1d_three_nodes() {
        let g = line_grid(3);
        assert_eq!(g.hx, 0.5);
        assert_eq!(g.boundary_tag(0), Some(BoundaryTag::Dirichlet));
        assert_eq!(g.boundary_tag(1), None);
        assert_eq!(g.boundary_tag(2), Some(BoundaryTag::Neumann));
    }

    #[test]
    fn build_2d_left_dirichlet() {
        let g = build_grid(&GridConfig::rect(
            [1.0, 1.0],
            [3, 3],
            [
                BoundaryTag::Dirichlet,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
            ],
        ))
        .unwrap();
        assert_eq!(g.n_nodes(), 9);
        assert_eq!(g.dirichlet_nodes().len(), 3);
        for &i in g.dirichlet_nodes() {
            assert_eq!(i % 3, 0); // left column
        }
    }

    #[test]
    fn all_neumann_rejected() {
        let err = build_grid(&GridConfig::line(
            1.0,
            3,
            BoundaryTag::Neumann,
            BoundaryTag::Neumann,
        ));
        assert!(matches!(err, Err(GridError::EmptyDirichlet)));
    }

    #[test]
    fn degenerate_axes_rejected() {
        let err = build_grid(&GridConfig::line(
            1.0,
            2,
            BoundaryTag::Dirichlet,
            BoundaryTag::Neumann,
        ));
        assert!(matches!(err, Err(GridError::TooFewNodes { .. })));
        let err = build_grid(&GridConfig::line(
            0.0,
            5,
            BoundaryTag::Dirichlet,
            BoundaryTag::Neumann,
        ));
        assert!(matches!(err, Err(GridError::BadLength { .. })));
        let mut cfg = GridConfig::line(1.0, 5, BoundaryTag::Dirichlet, BoundaryTag::Neumann);
        cfg.dimension = 3;
        assert!(matches!(build_grid(&cfg), Err(GridError::BadDimension(3))));
    }

    #[test]
    fn corner_nodes_prefer_dirichlet() {
        // bottom-left corner sits on a Dirichlet and a Neumann face
        let g = build_grid(&GridConfig::rect(
            [1.0, 1.0],
            [3, 3],
            [
                BoundaryTag::Dirichlet,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
            ],
        ))
        .unwrap();
        assert_eq!(g.boundary_tag(0), Some(BoundaryTag::Dirichlet));
        assert_eq!(g.boundary_tag(2), Some(BoundaryTag::Neumann));
        // every boundary node carries exactly one tag
        for i in 0..g.n_nodes() {
            let [x, y] = g.coord(i);
            let on_boundary = x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0;
            assert_eq!(g.boundary_tag(i).is_some(), on_boundary);
        }
    }

    #[test]
    fn integrate_constants_and_linears_exact() {
        let g = line_grid(3);
        assert!((g.integrate(&vec![1.0; 3]) - 1.0).abs() < 1e-15);
        let x: Vec<f64> = (0..3).map(|i| g.coord(i)[0]).collect();
        assert!((g.integrate(&x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrate_quadratic_trapezoid_value() {
        // x^2 on [0,1], 3 nodes: 0.25*(0 + 2*0.25 + 1) hand trapezoid sum = 0.375
        let g = line_grid(3);
        let f: Vec<f64> = (0..3).map(|i| g.coord(i)[0].powi(2)).collect();
        assert!((g.integrate(&f) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_linear_is_constant() {
        let g = line_grid(5);
        let f: Vec<f64> = (0..5).map(|i| 2.0 + 3.0 * g.coord(i)[0]).collect();
        let mut out = vec![0.0; g.n_cells()];
        g.gradient(&f, &mut out);
        for v in out {
            assert!((v - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_hat_function() {
        // (0,1,0) on h=0.5 gives cell gradients (2, -2)
        let g = line_grid(3);
        let mut out = vec![0.0; 2];
        g.gradient(&[0.0, 1.0, 0.0], &mut out);
        assert_eq!(out, vec![2.0, -2.0]);
    }

    #[test]
    fn gradient_constant_zero_2d() {
        let g = build_grid(&GridConfig::rect(
            [1.0, 2.0],
            [4, 3],
            [
                BoundaryTag::Dirichlet,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
            ],
        ))
        .unwrap();
        let f = vec![7.0; g.n_nodes()];
        let mut out = vec![0.0; 2 * g.n_cells()];
        g.gradient(&f, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn gradient_adjoint_matches_transpose() {
        let g = build_grid(&GridConfig::rect(
            [1.0, 1.0],
            [4, 4],
            [
                BoundaryTag::Dirichlet,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
            ],
        ))
        .unwrap();
        // <G f, q> == <f, G^T q> for arbitrary f, q
        let f: Vec<f64> = (0..g.n_nodes()).map(|i| (i as f64 * 0.7).sin()).collect();
        let q: Vec<f64> = (0..2 * g.n_cells())
            .map(|i| (i as f64 * 1.3).cos())
            .collect();
        let mut gf = vec![0.0; 2 * g.n_cells()];
        g.gradient(&f, &mut gf);
        let lhs: f64 = gf.iter().zip(&q).map(|(a, b)| a * b).sum();
        let mut gtq = vec![0.0; g.n_nodes()];
        g.gradient_adjoint(&q, &mut gtq);
        let rhs: f64 = f.iter().zip(&gtq).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn symmetric_gradient_of_linear_field_2d() {
        let g = build_grid(&GridConfig::rect(
            [1.0, 1.0],
            [4, 4],
            [
                BoundaryTag::Dirichlet,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
            ],
        ))
        .unwrap();
        let n = g.n_nodes();
        // u = (x + 2y, 3x), eps = [[1, (2+3)/2],[(2+3)/2, 0]]
        let mut u = vec![0.0; 2 * n];
        for i in 0..n {
            let [x, y] = g.coord(i);
            u[i] = x + 2.0 * y;
            u[n + i] = 3.0 * x;
        }
        let mut eps = Vec::new();
        symmetric_gradient(&g, &u, &mut eps);
        for e in eps {
            assert!((e.xx - 1.0).abs() < 1e-13);
            assert!(e.yy.abs() < 1e-13);
            assert!((e.xy - 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn second_gradient_linear_vanishes() {
        let g = line_grid(7);
        let u: Vec<f64> = (0..7).map(|i| 1.0 + 4.0 * g.coord(i)[0]).collect();
        let w: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        assert!(second_gradient_form(&g, &u, &w).abs() < 1e-12);
    }

    #[test]
    fn second_gradient_quadratic_positive() {
        let g = line_grid(7);
        let u: Vec<f64> = (0..7).map(|i| 0.5 * g.coord(i)[0].powi(2)).collect();
        let val = second_gradient_form(&g, &u, &u);
        // D_xx of x^2/2 is exactly 1 including one-sided stencils, so the form is |Omega|
        assert!((val - 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_gradient_hat_hand_value() {
        // 5 nodes on [0,1], u = (0,0,1,0,0): hand-computed dense stencil value 448
        let g = build_grid(&GridConfig::line(
            1.0,
            5,
            BoundaryTag::Dirichlet,
            BoundaryTag::Neumann,
        ))
        .unwrap();
        let u = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        let val = second_gradient_form(&g, &u, &u);
        assert!((val - 448.0).abs() < 1e-9, "got {val}");
    }

    #[test]
    fn second_gradient_apply_consistent_with_form() {
        let g = build_grid(&GridConfig::rect(
            [1.0, 1.5],
            [4, 5],
            [
                BoundaryTag::Dirichlet,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
                BoundaryTag::Neumann,
            ],
        ))
        .unwrap();
        let n = g.n_nodes();
        let u: Vec<f64> = (0..2 * n).map(|i| ((i * 7 % 13) as f64) * 0.1).collect();
        let w: Vec<f64> = (0..2 * n).map(|i| ((i * 5 % 11) as f64) * 0.2).collect();
        let mut sg = SecondGradient::new(&g);
        let form = sg.form(&g, &u, &w);
        let mut au = vec![0.0; 2 * n];
        sg.apply(&g, &u, &mut au);
        let dot: f64 = au.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((form - dot).abs() < 1e-10 * (1.0 + form.abs()));
    }

    #[test]
    fn apply_dirichlet_overwrites_and_is_idempotent() {
        let g = line_grid(5);
        let u = vec![9.0; 5];
        let b = vec![0.1; 5];
        let once = g.apply_dirichlet(&u, &b);
        assert_eq!(once[0], 0.1); // left is Dirichlet
        assert_eq!(once[1], 9.0);
        assert_eq!(once[4], 9.0); // right is Neumann
        let twice = g.apply_dirichlet(&once, &b);
        assert_eq!(once, twice);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn integrate_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0) {
                let g = line_grid(9);
                let f: Vec<f64> = (0..9).map(|i| (i as f64 * 0.3).sin()).collect();
                let h: Vec<f64> = (0..9).map(|i| (i as f64 * 0.9).cos()).collect();
                let combo: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + b * y).collect();
                let lhs = g.integrate(&combo);
                let rhs = a * g.integrate(&f) + b * g.integrate(&h);
                prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
            }

            #[test]
            fn form_symmetric_and_psd(seed in 0u64..50) {
                let g = line_grid(6);
                let u: Vec<f64> = (0..6).map(|i| ((seed + i as u64) as f64 * 0.37).sin()).collect();
                let w: Vec<f64> = (0..6).map(|i| ((seed * 3 + i as u64) as f64 * 0.53).cos()).collect();
                let mut sg = SecondGradient::new(&g);
                let uw = sg.form(&g, &u, &w);
                let wu = sg.form(&g, &w, &u);
                prop_assert!((uw - wu).abs() < 1e-11 * (1.0 + uw.abs()));
                prop_assert!(sg.form(&g, &u, &u) >= -1e-12);
            }
        }
    }
}
