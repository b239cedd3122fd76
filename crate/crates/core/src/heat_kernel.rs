//! Gaussian heat kernel, its gradient, and the heat semigroup acting on
//! gridded or analytic fields.
//!
//! All spatial integrals are midpoint sums on a uniform lattice anchored at the
//! evaluation point. The lattice step is the grid spacing `dx`, refined by an
//! integer factor whenever the kernel width `√t` is narrower than a few grid
//! cells, so the refined lattice always contains the grid nodes. Integration
//! is truncated at `|x - y| ≤ 8√t` per axis, and fields are extended beyond
//! the box by their boundary value.

use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

/// Kernel support used by every lattice sum, in units of `√t`.
pub const TRUNCATION_SIGMAS: f64 = 8.0;

/// Lattice points per `√t` below which the grid step is refined.
pub const DEFAULT_POINTS_PER_SIGMA: f64 = 8.0;

/// Margin, in units of `√T_max`, separating trusted interior nodes from the box edge.
pub const INTERIOR_MARGIN_SIGMAS: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("semigroup time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("point has {got} coordinates, grid dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("half width {half_width} is below 6·sqrt(T_max) = {required} for horizon {horizon}")]
    BoxTooSmall {
        half_width: f64,
        required: f64,
        horizon: f64,
    },
}

/// Uniform cell-centred grid on `[-L, L]^d`. Node `i` sits at
/// `(i - (n-1)/2)·dx`, so an odd node count puts the origin on a node and
/// `n·dx = 2L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    dx: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, dx: f64) -> Result<Self, KernelError> {
        if !(1..=2).contains(&dim) {
            return Err(KernelError::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < 3 || n.is_multiple_of(2) {
            return Err(KernelError::InvalidGrid(format!(
                "node count {n} must be odd and at least 3"
            )));
        }
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(KernelError::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        Ok(Self { dim, n, dx })
    }

    /// Smallest grid with spacing `dx` whose half width is at least `half_width`.
    pub fn covering(dim: usize, half_width: f64, dx: f64) -> Result<Self, KernelError> {
        if !(half_width > 0.0) {
            return Err(KernelError::InvalidGrid(format!(
                "half width {half_width} must be positive"
            )));
        }
        let mut n = (2.0 * half_width / dx - 1e-9).ceil().max(3.0) as usize;
        if n.is_multiple_of(2) {
            n += 1;
        }
        Self::new(dim, n, dx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.n as f64 * self.dx
    }

    /// Total node count, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - ((self.n - 1) / 2) as f64) * self.dx
    }

    /// Index of the node at the origin along each axis.
    pub fn center_index(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Flat index (row-major, last axis fastest) of the node closest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let axis = |v: f64| {
            let i = (v / self.dx).round() + self.center_index() as f64;
            i.clamp(0.0, (self.n - 1) as f64) as usize
        };
        match self.dim {
            1 => axis(x[0]),
            _ => axis(x[0]) * self.n + axis(x[1]),
        }
    }

    /// Coordinates of flat node `idx`, padded to two components.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coord(idx), 0.0],
            _ => [self.coord(idx / self.n), self.coord(idx % self.n)],
        }
    }

    pub fn check_horizon(&self, horizon: f64) -> Result<(), KernelError> {
        let required = INTERIOR_MARGIN_SIGMAS * horizon.max(0.0).sqrt();
        if self.half_width() < required {
            return Err(KernelError::BoxTooSmall {
                half_width: self.half_width(),
                required,
                horizon,
            });
        }
        Ok(())
    }

    /// True when every coordinate of node `idx` is at least `margin` from the box edge.
    pub fn is_interior(&self, idx: usize, margin: f64) -> bool {
        let p = self.point(idx);
        let edge = self.coord(self.n - 1);
        p[..self.dim].iter().all(|&c| c.abs() <= edge - margin)
    }

    fn clamp_coord(&self, v: f64) -> f64 {
        let edge = self.coord(self.n - 1);
        v.clamp(-edge, edge)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<(), KernelError> {
        if x.len() != self.dim {
            return Err(KernelError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Real values on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self, KernelError> {
        if values.len() != grid.len() {
            return Err(KernelError::InvalidGrid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: GridSpec, f: F) -> Self {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation, constant beyond the box.
    pub fn sample(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let n = g.n;
        let locate = |v: f64| {
            let f = (v / g.dx + g.center_index() as f64).clamp(0.0, (n - 1) as f64);
            let i = (f.floor() as usize).min(n - 2);
            (i, f - i as f64)
        };
        match g.dim {
            1 => {
                let (i, a) = locate(x[0]);
                let v0 = self.values[i];
                let v1 = self.values[i + 1];
                if a == 0.0 {
                    v0
                } else {
                    v0 + a * (v1 - v0)
                }
            }
            _ => {
                let (i, a) = locate(x[0]);
                let (j, b) = locate(x[1]);
                let at = |r: usize, c: usize| self.values[r * n + c];
                let lo = at(i, j) + b * (at(i, j + 1) - at(i, j));
                let hi = at(i + 1, j) + b * (at(i + 1, j + 1) - at(i + 1, j));
                lo + a * (hi - lo)
            }
        }
    }
}

/// Kernel value and spatial gradient at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEval {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// `(2πt)^{-d/2} exp(-|x|²/2t)` with `d = x.len()`.
pub fn kernel(t: f64, x: &[f64]) -> Result<f64, KernelError> {
    if !(t > 0.0) {
        return Err(KernelError::NonPositiveTime(t));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok((2.0 * PI * t).powf(-(x.len() as f64) / 2.0) * (-r2 / (2.0 * t)).exp())
}

/// `∂_{x_i} K(t, x) = -(x_i / t) K(t, x)`.
pub fn kernel_gradient(t: f64, x: &[f64]) -> Result<Vec<f64>, KernelError> {
    let k = kernel(t, x)?;
    Ok(x.iter().map(|&xi| -(xi / t) * k).collect())
}

pub fn kernel_eval(t: f64, x: &[f64]) -> Result<KernelEval, KernelError> {
    let value = kernel(t, x)?;
    Ok(KernelEval {
        t,
        x: x.to_vec(),
        gradient: x.iter().map(|&xi| -(xi / t) * value).collect(),
        value,
    })
}

/// One-dimensional lattice `w_i = i·h`, `|i| ≤ half`, with midpoint weights
/// for the kernel and for `(w/t)·K`.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub step: f64,
    pub half: usize,
    kernel_w: Vec<f64>,
    grad_w: Vec<f64>,
}

impl Lattice {
    pub fn new(t: f64, dx: f64, points_per_sigma: f64) -> Result<Self, KernelError> {
        if !(t > 0.0) {
            return Err(KernelError::NonPositiveTime(t));
        }
        let sigma = t.sqrt();
        let refine = ((points_per_sigma * dx / sigma).ceil() as usize).max(1);
        let step = dx / refine as f64;
        let half = (TRUNCATION_SIGMAS * sigma / step).floor() as usize;
        let norm = step / (2.0 * PI * t).sqrt();
        let len = 2 * half + 1;
        let mut kernel_w = Vec::with_capacity(len);
        let mut grad_w = Vec::with_capacity(len);
        for i in 0..len {
            let w = (i as f64 - half as f64) * step;
            let k = norm * (-w * w / (2.0 * t)).exp();
            kernel_w.push(k);
            grad_w.push(w / t * k);
        }
        Ok(Self {
            step,
            half,
            kernel_w,
            grad_w,
        })
    }

    pub fn offset(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) * self.step
    }

    pub fn len(&self) -> usize {
        self.kernel_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel_w.is_empty()
    }
}

/// Value and gradient of `P_t φ` at one anchor point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convolution {
    pub value: f64,
    pub gradient: [f64; 2],
}

/// Lattice sums of `∫ K(t, x-z) φ(z) dz` and of the subtracted gradient form
/// `∫ ∂_{x_i}K(t, x-z) [φ(z) - φ(x)] dz`, sharing one pass over `φ`.
pub fn convolve_with_lattice<F>(lattice: &Lattice, x: &[f64], phi: &F, grid: &GridSpec) -> Convolution
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let len = lattice.len();
    match grid.dim {
        1 => {
            let x0 = x[0];
            let phi_x = phi(&[grid.clamp_coord(x0)]);
            let (mut value, mut grad) = (0.0, 0.0);
            for i in 0..len {
                let z = grid.clamp_coord(x0 + lattice.offset(i));
                let pz = phi(&[z]);
                value += lattice.kernel_w[i] * pz;
                grad += lattice.grad_w[i] * (pz - phi_x);
            }
            Convolution {
                value,
                gradient: [grad, 0.0],
            }
        }
        _ => {
            let anchor = [grid.clamp_coord(x[0]), grid.clamp_coord(x[1])];
            let phi_x = phi(&anchor);
            let (mut value, mut g0, mut g1) = (0.0, 0.0, 0.0);
            for i in 0..len {
                let z0 = grid.clamp_coord(x[0] + lattice.offset(i));
                let (ki, gi) = (lattice.kernel_w[i], lattice.grad_w[i]);
                let (mut row_v, mut row_g0, mut row_g1) = (0.0, 0.0, 0.0);
                for j in 0..len {
                    let z1 = grid.clamp_coord(x[1] + lattice.offset(j));
                    let pz = phi(&[z0, z1]);
                    let diff = pz - phi_x;
                    row_v += lattice.kernel_w[j] * pz;
                    row_g0 += lattice.kernel_w[j] * diff;
                    row_g1 += lattice.grad_w[j] * diff;
                }
                value += ki * row_v;
                g0 += gi * row_g0;
                g1 += ki * row_g1;
            }
            Convolution {
                value,
                gradient: [g0, g1],
            }
        }
    }
}

/// `P_t φ(x)` and `∇P_t φ(x)` for an analytic field, `t > 0`.
pub fn convolve<F>(t: f64, x: &[f64], phi: &F, grid: &GridSpec) -> Result<Convolution, KernelError>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    grid.check_point(x)?;
    let lattice = Lattice::new(t, grid.dx, DEFAULT_POINTS_PER_SIGMA)?;
    Ok(convolve_with_lattice(&lattice, x, phi, grid))
}

/// Subtracted-kernel gradient `∫ ∂_{x_i}K(t, x-z)[φ(z) - φ(x)] dz`, one entry
/// per spatial component. Returns exact zeros for constant `φ`.
pub fn convolve_gradient_subtracted<F>(t: f64, x: &[f64], phi: &F, grid: &GridSpec) -> Result<Vec<f64>, KernelError>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let c = convolve(t, x, phi, grid)?;
    Ok(c.gradient[..grid.dim].to_vec())
}

/// `P_t` applied node-wise to a gridded field. `t = 0` returns the field unchanged.
pub fn apply_semigroup(t: f64, field: &GridField) -> Result<GridField, KernelError> {
    if t < 0.0 || t.is_nan() {
        return Err(KernelError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    let grid = field.grid;
    let lattice = Lattice::new(t, grid.dx, DEFAULT_POINTS_PER_SIGMA)?;
    let sampler = |z: &[f64]| field.sample(z);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.point(idx);
            convolve_with_lattice(&lattice, &p[..grid.dim], &sampler, &grid).value
        })
        .collect();
    Ok(GridField { grid, values })
}

/// `P_t` and `∇P_t` of a gridded field, node-wise. Gradients use the
/// subtracted form; at `t = 0` the value is returned as is and the gradient
/// slot is `None`.
pub fn apply_semigroup_with_gradient(
    t: f64,
    field: &GridField,
) -> Result<(GridField, Option<Vec<GridField>>), KernelError> {
    if t < 0.0 || t.is_nan() {
        return Err(KernelError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok((field.clone(), None));
    }
    let grid = field.grid;
    let lattice = Lattice::new(t, grid.dx, DEFAULT_POINTS_PER_SIGMA)?;
    let sampler = |z: &[f64]| field.sample(z);
    let convs: Vec<Convolution> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.point(idx);
            convolve_with_lattice(&lattice, &p[..grid.dim], &sampler, &grid)
        })
        .collect();
    let value = GridField {
        grid,
        values: convs.iter().map(|c| c.value).collect(),
    };
    let grads = (0..grid.dim)
        .map(|k| GridField {
            grid,
            values: convs.iter().map(|c| c.gradient[k]).collect(),
        })
        .collect();
    Ok((value, Some(grads)))
}
