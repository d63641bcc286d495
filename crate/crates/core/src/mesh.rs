//! Uniform rectilinear grids on boxes in one or two dimensions.
//!
//! Scalar fields live on nodes and are interpolated multilinearly (Q1).
//! Gradients are evaluated at cell centers and every integral uses the
//! one-point (midpoint) rule, so a discrete integral is `Σ_k c_k · |cell|`.
//!
//! Node `(i, j)` of a 2D grid with `nx × ny` cells has index `j·(nx+1) + i`;
//! cell `(i, j)` has index `j·nx + i`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

/// Coordinates of a node or cell center; the second entry is unused in 1D.
pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    Dimension(usize),
    #[error("expected {expected} per-axis entries, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("degenerate extent on axis {axis}: ({lo}, {hi})")]
    DegenerateExtent { axis: usize, lo: f64, hi: f64 },
    #[error("resolution on axis {axis} is {got}, need at least 2")]
    Resolution { axis: usize, got: usize },
    #[error("length mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: Vec<(f64, f64)>,
    resolution: Vec<usize>,
    cell_size: Vec<f64>,
    cell_volume: f64,
    // flattened corner lists, 2^dim entries per cell
    cell_nodes: Vec<usize>,
}

impl Grid {
    pub fn new(dim: usize, extents: &[(f64, f64)], resolution: &[usize]) -> Result<Arc<Self>, MeshError> {
        if !(1..=2).contains(&dim) {
            return Err(MeshError::Dimension(dim));
        }
        if extents.len() != dim {
            return Err(MeshError::AxisCount { expected: dim, got: extents.len() });
        }
        if resolution.len() != dim {
            return Err(MeshError::AxisCount { expected: dim, got: resolution.len() });
        }
        for (axis, &(lo, hi)) in extents.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(MeshError::DegenerateExtent { axis, lo, hi });
            }
        }
        for (axis, &n) in resolution.iter().enumerate() {
            if n < 2 {
                return Err(MeshError::Resolution { axis, got: n });
            }
        }
        let cell_size: Vec<f64> = extents.iter().zip(resolution).map(|(&(lo, hi), &n)| (hi - lo) / n as f64).collect();
        let cell_volume = cell_size.iter().product();

        let cell_nodes = match dim {
            1 => (0..resolution[0]).flat_map(|i| [i, i + 1]).collect(),
            _ => {
                let (nx, ny) = (resolution[0], resolution[1]);
                let stride = nx + 1;
                let mut nodes = Vec::with_capacity(4 * nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        let n00 = j * stride + i;
                        nodes.extend_from_slice(&[n00, n00 + 1, n00 + stride, n00 + stride + 1]);
                    }
                }
                nodes
            }
        };

        Ok(Arc::new(Grid {
            dim,
            extents: extents.to_vec(),
            resolution: resolution.to_vec(),
            cell_size,
            cell_volume,
            cell_nodes,
        }))
    }

    /// Convenience constructor for the interval `(lo, hi)` with `n` cells.
    pub fn interval(lo: f64, hi: f64, n: usize) -> Result<Arc<Self>, MeshError> {
        Grid::new(1, &[(lo, hi)], &[n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn cell_size(&self) -> &[f64] {
        &self.cell_size
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().map(|n| n + 1).product()
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Number of corners per cell (`2^dim`).
    pub fn corners_per_cell(&self) -> usize {
        1 << self.dim
    }

    /// Node indices of cell `c`, ordered `n0, n1` in 1D and `n00, n10, n01, n11` in 2D.
    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        let k = self.corners_per_cell();
        &self.cell_nodes[c * k..(c + 1) * k]
    }

    pub fn node_point(&self, n: usize) -> Point {
        let stride = self.resolution[0] + 1;
        let (i, j) = (n % stride, n / stride);
        let x = self.extents[0].0 + i as f64 * self.cell_size[0];
        let y = if self.dim == 2 { self.extents[1].0 + j as f64 * self.cell_size[1] } else { 0.0 };
        [x, y]
    }

    pub fn cell_center(&self, c: usize) -> Point {
        let nx = self.resolution[0];
        let (i, j) = (c % nx, c / nx);
        let x = self.extents[0].0 + (i as f64 + 0.5) * self.cell_size[0];
        let y = if self.dim == 2 { self.extents[1].0 + (j as f64 + 0.5) * self.cell_size[1] } else { 0.0 };
        [x, y]
    }

    /// Derivative of the cell-center gradient with respect to each corner
    /// value: `weights[corner][axis]`. Identical for every cell.
    pub fn gradient_weights(&self) -> [[f64; 2]; 4] {
        match self.dim {
            1 => {
                let inv = 1.0 / self.cell_size[0];
                [[-inv, 0.0], [inv, 0.0], [0.0; 2], [0.0; 2]]
            }
            _ => {
                let ax = 0.5 / self.cell_size[0];
                let ay = 0.5 / self.cell_size[1];
                [[-ax, -ay], [ax, -ay], [-ax, ay], [ax, ay]]
            }
        }
    }

    pub fn boundary_mask(&self) -> BoundaryMask {
        let stride = self.resolution[0] + 1;
        let mask = (0..self.node_count())
            .map(|n| {
                let i = n % stride;
                let on_x = i == 0 || i == self.resolution[0];
                if self.dim == 1 {
                    on_x
                } else {
                    let j = n / stride;
                    on_x || j == 0 || j == self.resolution[1]
                }
            })
            .collect();
        BoundaryMask { mask }
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, MeshError> {
        let expected = grid.node_count();
        if values.len() != expected {
            return Err(MeshError::ShapeMismatch { expected, got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite { index });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.node_count();
        ScalarField { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Result<Self, MeshError> {
        let values = (0..grid.node_count()).map(|n| f(grid.node_point(n))).collect();
        ScalarField::new(grid, values)
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

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    fn check_grid(&self, other: &ScalarField) -> Result<(), MeshError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(MeshError::GridMismatch)
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField, MeshError> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        ScalarField::new(self.grid.clone(), values)
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One gradient vector per cell; the second component is zero in 1D.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    grid: Arc<Grid>,
    vectors: Vec<[f64; 2]>,
}

impl GradientField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    /// Euclidean norm per cell.
    pub fn norms(&self) -> Vec<f64> {
        self.vectors.iter().map(|g| g[0].hypot(g[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMask {
    mask: Vec<bool>,
}

impl BoundaryMask {
    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        self.mask[n]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Indices of the nodes not on the boundary, in increasing order.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&n| !self.mask[n]).collect()
    }
}

/// Gradient of the cell's multilinear interpolant at its center, computed
/// from raw nodal values.
pub(crate) fn cell_gradient(grid: &Grid, values: &[f64], c: usize) -> [f64; 2] {
    let w = grid.gradient_weights();
    let mut g = [0.0; 2];
    for (k, &n) in grid.cell_nodes(c).iter().enumerate() {
        g[0] += w[k][0] * values[n];
        g[1] += w[k][1] * values[n];
    }
    g
}

pub(crate) fn gradient_of_values(grid: &Grid, values: &[f64]) -> Vec<[f64; 2]> {
    (0..grid.cell_count()).map(|c| cell_gradient(grid, values, c)).collect()
}

pub(crate) fn cell_means(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let k = grid.corners_per_cell() as f64;
    (0..grid.cell_count()).map(|c| grid.cell_nodes(c).iter().map(|&n| values[n]).sum::<f64>() / k).collect()
}

pub fn discrete_gradient(u: &ScalarField) -> GradientField {
    GradientField { grid: u.grid.clone(), vectors: gradient_of_values(&u.grid, &u.values) }
}

/// Arithmetic mean of the corner values of every cell.
pub fn node_to_cell(u: &ScalarField) -> Vec<f64> {
    cell_means(&u.grid, &u.values)
}

/// Midpoint rule: `Σ_k c_k · cell_volume`, summed pairwise in a fixed order.
pub fn integrate_cells(grid: &Grid, c: &[f64]) -> Result<f64, MeshError> {
    if c.len() != grid.cell_count() {
        return Err(MeshError::ShapeMismatch { expected: grid.cell_count(), got: c.len() });
    }
    Ok(pairwise_sum(c) * grid.cell_volume())
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// A random field with zero boundary trace: i.i.d. uniform noise in
/// `[-amplitude, amplitude]` on interior nodes.
pub fn random_zero_trace<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, amplitude: f64) -> ScalarField {
    let mask = grid.boundary_mask();
    let values = (0..grid.node_count())
        .map(|n| if mask.is_boundary(n) { 0.0 } else { rng.gen_range(-amplitude..=amplitude) })
        .collect();
    ScalarField { grid: grid.clone(), values }
}

/// A random smooth field with zero boundary trace: a combination of the
/// lowest sine modes of the box with coefficients uniform in `[-amplitude, amplitude]`
/// damped like `1/k`.
pub fn random_smooth_zero_trace<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, amplitude: f64) -> ScalarField {
    const MODES: usize = 4;
    let ky_max = if grid.dim() == 2 { MODES } else { 1 };
    let mut coeffs = Vec::with_capacity(MODES * ky_max);
    for kx in 1..=MODES {
        for ky in 1..=ky_max {
            let c: f64 = rng.gen_range(-amplitude..=amplitude);
            coeffs.push((kx, ky, c / (kx * ky) as f64));
        }
    }
    let ext = grid.extents().to_vec();
    let mask = grid.boundary_mask();
    let values = (0..grid.node_count())
        .map(|n| {
            if mask.is_boundary(n) {
                return 0.0;
            }
            let pt = grid.node_point(n);
            let sx = (pt[0] - ext[0].0) / (ext[0].1 - ext[0].0);
            let sy = if grid.dim() == 2 { (pt[1] - ext[1].0) / (ext[1].1 - ext[1].0) } else { 0.5 };
            coeffs
                .iter()
                .map(|&(kx, ky, c)| {
                    let yfac = if grid.dim() == 2 { (ky as f64 * PI * sy).sin() } else { 1.0 };
                    c * (kx as f64 * PI * sx).sin() * yfac
                })
                .sum()
        })
        .collect();
    ScalarField { grid: grid.clone(), values }
}

/// Returns `φ` on masked nodes and `u` elsewhere.
pub fn apply_dirichlet(u: &ScalarField, phi: &ScalarField, mask: &BoundaryMask) -> Result<ScalarField, MeshError> {
    u.check_grid(phi)?;
    if mask.mask.len() != u.values.len() {
        return Err(MeshError::ShapeMismatch { expected: u.values.len(), got: mask.mask.len() });
    }
    let values = u
        .values
        .iter()
        .zip(&phi.values)
        .zip(&mask.mask)
        .map(|((&a, &b), &on_boundary)| if on_boundary { b } else { a })
        .collect();
    Ok(ScalarField { grid: u.grid.clone(), values })
}
