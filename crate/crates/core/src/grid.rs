//! Uniform node-based grids on an interval or rectangle.
//!
//! Unknowns live on nodes. Gradients live on cells and are formed from the
//! nodal differences of each cell, averaged across the cell in 2D. The
//! divergence is defined as the negative adjoint of the gradient with
//! respect to the trapezoidal nodal product and the cell-volume product, so
//! the zero-Neumann condition is built into the operator pair and never needs
//! ghost values.
//!
//! Note that in 2D the averaged gradient annihilates the nodal checkerboard
//! mode in addition to constants. Every problem solved on top of it carries a
//! mass term, so the discrete systems stay definite.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lengths: Vec<f64>,
    cells: Vec<usize>,
    spacing: Vec<f64>,
    node_count: usize,
    cell_count: usize,
    cell_volume: f64,
    node_weights: Vec<f64>,
}

/// Builds a uniform grid with `cells[k]` cells along axis `k`.
pub fn build_grid(dim: usize, lengths: &[f64], cells: &[usize]) -> Result<Grid> {
    Grid::new(dim, lengths, cells)
}

impl Grid {
    pub fn new(dim: usize, lengths: &[f64], cells: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if lengths.len() != dim || cells.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} extents and cell counts, got {} and {}",
                lengths.len(),
                cells.len()
            )));
        }
        for k in 0..dim {
            if !(lengths[k].is_finite() && lengths[k] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent along axis {k} must be positive, got {}",
                    lengths[k]
                )));
            }
            if cells[k] == 0 {
                return Err(Error::InvalidGrid(format!(
                    "cell count along axis {k} must be at least 1"
                )));
            }
        }
        let spacing: Vec<f64> = (0..dim).map(|k| lengths[k] / cells[k] as f64).collect();
        let node_count = cells.iter().map(|c| c + 1).product();
        let cell_count = cells.iter().product();
        let cell_volume = spacing.iter().product();

        let mut grid = Grid {
            dim,
            lengths: lengths.to_vec(),
            cells: cells.to_vec(),
            spacing,
            node_count,
            cell_count,
            cell_volume,
            node_weights: Vec::new(),
        };
        // Trapezoidal weights: each cell hands an equal share of its volume
        // to each of its corners.
        let share = cell_volume / grid.corners_per_cell() as f64;
        let mut weights = vec![0.0; node_count];
        for c in 0..cell_count {
            for &n in grid.cell_nodes(c).iter().take(grid.corners_per_cell()) {
                weights[n] += share;
            }
        }
        grid.node_weights = weights;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn measure(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Trapezoidal quadrature weight of every node.
    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn corners_per_cell(&self) -> usize {
        1 << self.dim
    }

    /// Nodes per row along the x axis.
    fn row_len(&self) -> usize {
        self.cells[0] + 1
    }

    /// Half bandwidth of the nodal stiffness pattern.
    pub fn bandwidth(&self) -> usize {
        match self.dim {
            1 => 1,
            _ => self.row_len() + 1,
        }
    }

    /// Coordinates of node `n`; unused trailing entries are zero.
    pub fn node_position(&self, n: usize) -> [f64; 2] {
        match self.dim {
            1 => [n as f64 * self.spacing[0], 0.0],
            _ => {
                let i = n % self.row_len();
                let j = n / self.row_len();
                [i as f64 * self.spacing[0], j as f64 * self.spacing[1]]
            }
        }
    }

    /// Corner nodes of cell `c` in the order (0,0), (1,0), (0,1), (1,1).
    /// In 1D only the first two entries are meaningful.
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        match self.dim {
            1 => [c, c + 1, 0, 0],
            _ => {
                let nx = self.cells[0];
                let i = c % nx;
                let j = c / nx;
                let row = self.row_len();
                let n00 = i + row * j;
                [n00, n00 + 1, n00 + row, n00 + row + 1]
            }
        }
    }

    /// Gradient stencil of cell `c` along `axis` as (node, coefficient) pairs.
    pub fn cell_stencil(&self, c: usize, axis: usize) -> ([usize; 4], [f64; 4], usize) {
        let nodes = self.cell_nodes(c);
        match self.dim {
            1 => {
                let inv = 1.0 / self.spacing[0];
                (nodes, [-inv, inv, 0.0, 0.0], 2)
            }
            _ => {
                let half = 0.5 / self.spacing[axis];
                let coeffs = if axis == 0 {
                    [-half, half, -half, half]
                } else {
                    [-half, -half, half, half]
                };
                (nodes, coeffs, 4)
            }
        }
    }

    /// Cell gradients of nodal values, laid out as `out[c * dim + axis]`.
    pub fn grad_raw(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.node_count);
        debug_assert_eq!(out.len(), self.cell_count * self.dim);
        match self.dim {
            1 => {
                let inv = 1.0 / self.spacing[0];
                for c in 0..self.cell_count {
                    out[c] = (f[c + 1] - f[c]) * inv;
                }
            }
            _ => {
                let hx = 0.5 / self.spacing[0];
                let hy = 0.5 / self.spacing[1];
                for c in 0..self.cell_count {
                    let [a, b, d, e] = self.cell_nodes(c);
                    out[2 * c] = ((f[b] - f[a]) + (f[e] - f[d])) * hx;
                    out[2 * c + 1] = ((f[d] - f[a]) + (f[e] - f[b])) * hy;
                }
            }
        }
    }

    /// Transpose of [`Grid::grad_raw`] with respect to plain Euclidean sums.
    pub fn grad_transpose_raw(&self, q: &[f64], out: &mut [f64]) {
        debug_assert_eq!(q.len(), self.cell_count * self.dim);
        out.iter_mut().for_each(|o| *o = 0.0);
        match self.dim {
            1 => {
                let inv = 1.0 / self.spacing[0];
                for c in 0..self.cell_count {
                    let s = q[c] * inv;
                    out[c] -= s;
                    out[c + 1] += s;
                }
            }
            _ => {
                let hx = 0.5 / self.spacing[0];
                let hy = 0.5 / self.spacing[1];
                for c in 0..self.cell_count {
                    let [a, b, d, e] = self.cell_nodes(c);
                    let sx = q[2 * c] * hx;
                    let sy = q[2 * c + 1] * hy;
                    out[a] += -sx - sy;
                    out[b] += sx - sy;
                    out[d] += -sx + sy;
                    out[e] += sx + sy;
                }
            }
        }
    }

    /// `out = K f` where `K = G^T diag(vol) G` is the nodal stiffness matrix,
    /// so that `f^T K g = (grad f, grad g)`.
    pub fn stiffness_apply(&self, f: &[f64], out: &mut [f64]) {
        let mut g = vec![0.0; self.cell_count * self.dim];
        self.grad_raw(f, &mut g);
        g.iter_mut().for_each(|v| *v *= self.cell_volume);
        self.grad_transpose_raw(&g, out);
    }

    /// Arithmetic mean of nodal values over the corners of each cell.
    pub fn cell_average(&self, nodal: &[f64], out: &mut [f64]) {
        let k = self.corners_per_cell();
        let inv = 1.0 / k as f64;
        for (c, o) in out.iter_mut().enumerate() {
            let nodes = self.cell_nodes(c);
            *o = nodes[..k].iter().map(|&n| nodal[n]).sum::<f64>() * inv;
        }
    }

    /// Transpose of [`Grid::cell_average`].
    pub fn cell_average_transpose(&self, cellwise: &[f64], out: &mut [f64]) {
        let k = self.corners_per_cell();
        let inv = 1.0 / k as f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, &v) in cellwise.iter().enumerate() {
            for &n in &self.cell_nodes(c)[..k] {
                out[n] += v * inv;
            }
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if std::ptr::eq(self, grid) || self == grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn gradient(&self, f: &Field) -> Result<VectorField> {
        self.check(&f.grid)?;
        let mut raw = vec![0.0; self.cell_count * self.dim];
        self.grad_raw(&f.values, &mut raw);
        Ok(VectorField::from_interleaved(f.grid.clone(), &raw))
    }

    /// Negative adjoint of [`Grid::gradient`]:
    /// `inner_h_vec(grad f, w) = -inner_h(f, div w)` for all `f`, `w`.
    pub fn divergence(&self, w: &VectorField) -> Result<Field> {
        self.check(&w.grid)?;
        let mut q = w.interleaved();
        q.iter_mut().for_each(|v| *v *= self.cell_volume);
        let mut out = vec![0.0; self.node_count];
        self.grad_transpose_raw(&q, &mut out);
        for (o, wgt) in out.iter_mut().zip(&self.node_weights) {
            *o = -*o / wgt;
        }
        Ok(Field {
            grid: w.grid.clone(),
            values: out,
        })
    }

    pub fn inner_h(&self, f: &Field, g: &Field) -> Result<f64> {
        self.check(&f.grid)?;
        self.check(&g.grid)?;
        Ok(weighted_dot(&self.node_weights, &f.values, &g.values))
    }

    pub fn inner_h_vec(&self, a: &VectorField, b: &VectorField) -> Result<f64> {
        self.check(&a.grid)?;
        self.check(&b.grid)?;
        let s: f64 = a
            .components
            .iter()
            .zip(&b.components)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
            .sum();
        Ok(s * self.cell_volume)
    }

    pub fn norm_h(&self, f: &Field) -> Result<f64> {
        Ok(self.inner_h(f, f)?.sqrt())
    }

    pub fn norm_v(&self, f: &Field) -> Result<f64> {
        self.check(&f.grid)?;
        Ok(self.norm_v_sq_raw(&f.values).sqrt())
    }

    /// `|f|_H^2` on raw nodal values.
    pub fn norm_h_sq_raw(&self, f: &[f64]) -> f64 {
        weighted_dot(&self.node_weights, f, f)
    }

    /// `|grad f|^2` on raw nodal values.
    pub fn grad_sq_raw(&self, f: &[f64]) -> f64 {
        let mut g = vec![0.0; self.cell_count * self.dim];
        self.grad_raw(f, &mut g);
        g.iter().map(|v| v * v).sum::<f64>() * self.cell_volume
    }

    pub fn norm_v_sq_raw(&self, f: &[f64]) -> f64 {
        self.norm_h_sq_raw(f) + self.grad_sq_raw(f)
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Nodal scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "field",
                index,
            });
        }
        Ok(Field { grid, values })
    }

    /// Wraps values already known to be finite and correctly sized.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Field { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.node_count();
        Field {
            grid,
            values: vec![c; n],
        }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every node; `f` receives the first `dim` coordinates.
    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let dim = grid.dim();
        let values = (0..grid.node_count())
            .map(|n| f(&grid.node_position(n)[..dim]))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Result<Field> {
        self.grid.check(&other.grid)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }
}

/// Cell-centred vector field, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<Grid>,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim()
            || components.iter().any(|c| c.len() != grid.cell_count())
        {
            return Err(Error::InvalidGrid(
                "vector field components do not match the grid".into(),
            ));
        }
        for comp in &components {
            if let Some(index) = comp.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "vector field",
                    index,
                });
            }
        }
        Ok(VectorField { grid, components })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let comps = vec![vec![0.0; grid.cell_count()]; grid.dim()];
        VectorField {
            grid,
            components: comps,
        }
    }

    fn from_interleaved(grid: Arc<Grid>, raw: &[f64]) -> Self {
        let dim = grid.dim();
        let components = (0..dim)
            .map(|k| raw.iter().skip(k).step_by(dim).copied().collect())
            .collect();
        VectorField { grid, components }
    }

    fn interleaved(&self) -> Vec<f64> {
        let dim = self.grid.dim();
        let mut out = vec![0.0; self.grid.cell_count() * dim];
        for (k, comp) in self.components.iter().enumerate() {
            for (c, v) in comp.iter().enumerate() {
                out[c * dim + k] = *v;
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }
}
