//! Deterministic per-cell convolution coefficients of the mild solution.
//!
//! For a fixed time `t` and evaluation points, every term of
//!
//! `u(t,x) = ∫ P_{t-r} h(r) dr + ∫ P_{t-r} f(r) dW_r + ∫∫ P_{t-r} g(r,·,v) Ñ(dr,dv)`
//!
//! is linear in the noise. The stochastic integrals are left-endpoint sums on
//! the path grid, so `P_{t-r_j} f(r_j)(x)` and its gradient are computed once
//! per cell and reused for every path.

use rayon::prelude::*;

use super::fields::{Coefficients, RandomFactor};
use super::MildError;
use crate::heat_kernel::{convolve_with_lattice, Convolution, GridSpec, Lattice, DEFAULT_POINTS_PER_SIGMA};
use crate::levy_noise::{forcing_factor, LevyMeasureSpec, NoisePath, TimeGrid};
use crate::quadrature::{graded_rule, GaussLegendre};

/// `[value, ∂₁, ∂₂]` at one point.
pub type Triple = [f64; 3];

fn triple(c: Convolution, scale: f64) -> Triple {
    [scale * c.value, scale * c.gradient[0], scale * c.gradient[1]]
}

fn axpy(acc: &mut Triple, a: f64, x: &Triple) {
    for k in 0..3 {
        acc[k] += a * x[k];
    }
}

/// Discretization parameters of a [`MildPlan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Lattice points per `√(t-r)`; see [`Lattice::new`].
    pub points_per_sigma: f64,
    /// Cells of the graded mesh for the deterministic `h` integral.
    pub h_cells: usize,
    /// Grading exponent toward `r = t` of that mesh.
    pub h_kappa: f64,
    /// Gauss-Legendre points per cell of that mesh.
    pub h_order: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            points_per_sigma: DEFAULT_POINTS_PER_SIGMA,
            h_cells: 64,
            h_kappa: 2.0,
            h_order: 4,
        }
    }
}

#[derive(Debug, Clone)]
struct JumpPart {
    spec: LevyMeasureSpec,
    psi: super::fields::MarkFactor,
    rate: f64,
    coef: Vec<Triple>,
}

/// Contribution of each term at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointTerms {
    pub h: Triple,
    pub f: Triple,
    pub g: Triple,
}

impl PointTerms {
    /// `h + f + g`, summed in that order.
    pub fn total(&self) -> Triple {
        std::array::from_fn(|k| self.h[k] + self.f[k] + self.g[k])
    }
}

/// Precomputed coefficients of `u(t, ·)` at a fixed list of points.
#[derive(Debug, Clone)]
pub struct MildPlan {
    t: f64,
    dim: usize,
    points: Vec<[f64; 2]>,
    nodes: Vec<f64>,
    f_coef: Option<Vec<Triple>>,
    jump: Option<JumpPart>,
    h_coef: Option<Vec<Triple>>,
    h_factor: RandomFactor,
}

impl MildPlan {
    /// `t` must be a node of `path_grid`. Points are given in the grid's
    /// dimension; a second coordinate is ignored in one dimension.
    pub fn new(
        t: f64,
        coeffs: &Coefficients,
        points: &[[f64; 2]],
        grid: &GridSpec,
        path_grid: &TimeGrid,
        spec: Option<&LevyMeasureSpec>,
        options: PlanOptions,
    ) -> Result<Self, MildError> {
        if !(t >= 0.0) || t > path_grid.horizon() * (1.0 + 1e-12) {
            return Err(MildError::BeyondPath {
                t,
                horizon: path_grid.horizon(),
            });
        }
        let steps = path_grid.node_index(t).ok_or(MildError::NotANode(t))?;
        coeffs.check_horizon(t)?;
        let dim = grid.dim();
        let nodes = path_grid.nodes()[..=steps].to_vec();
        let t = nodes[steps];
        let np = points.len();

        let f_active = !coeffs.f.is_zero();
        let jump = match &coeffs.g {
            Some(g) if !g.phi.is_zero() => {
                let spec = spec.ok_or(MildError::MissingLevyMeasure)?;
                Some((g, spec))
            }
            _ => None,
        };

        let mut f_coef = if f_active {
            Some(Vec::with_capacity(steps * np))
        } else {
            None
        };
        let mut g_coef = if jump.is_some() {
            Some(Vec::with_capacity(steps * np))
        } else {
            None
        };
        if f_active || jump.is_some() {
            type Row = (Vec<Triple>, Vec<Triple>);
            let rows: Vec<Result<Row, MildError>> = (0..steps)
                .into_par_iter()
                .map(|j| {
                    let r = nodes[j];
                    let lattice = Lattice::new(t - r, grid.dx(), options.points_per_sigma)?;
                    let mut fr = Vec::new();
                    let mut gr = Vec::new();
                    for p in points {
                        let x = &p[..dim];
                        if f_active {
                            let c = convolve_with_lattice(&lattice, x, &|z: &[f64]| coeffs.f.spatial(z), grid);
                            fr.push(triple(c, coeffs.f.time.eval(r)));
                        }
                        if let Some((g, _)) = jump {
                            let c = convolve_with_lattice(&lattice, x, &|z: &[f64]| g.phi.spatial(z), grid);
                            gr.push(triple(c, g.phi.time.eval(r)));
                        }
                    }
                    Ok((fr, gr))
                })
                .collect();
            for row in rows {
                let (fr, gr) = row?;
                if let Some(v) = f_coef.as_mut() {
                    v.extend(fr);
                }
                if let Some(v) = g_coef.as_mut() {
                    v.extend(gr);
                }
            }
        }

        let h_coef = if coeffs.h.field.is_zero() || t == 0.0 {
            None
        } else {
            Some(h_term(t, coeffs, points, grid, options)?)
        };

        let jump = match (jump, g_coef) {
            (Some((g, spec)), Some(coef)) => Some(JumpPart {
                spec: spec.clone(),
                psi: g.psi.clone(),
                rate: g.psi.moment(1, spec),
                coef,
            }),
            _ => None,
        };

        Ok(Self {
            t,
            dim,
            points: points.to_vec(),
            nodes,
            f_coef,
            jump,
            h_coef,
            h_factor: coeffs.h.factor,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of path cells in `(0, t]`.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Term-by-term value and gradient at every plan point for one path.
    pub fn apply(&self, path: &NoisePath) -> Result<Vec<PointTerms>, MildError> {
        let steps = self.steps();
        let path_nodes = path.grid().nodes();
        if path_nodes.len() < self.nodes.len() || path_nodes[..self.nodes.len()] != self.nodes[..] {
            return Err(MildError::PathMismatch);
        }
        let np = self.points.len();
        let mut out = vec![PointTerms::default(); np];

        if let Some(coef) = &self.f_coef {
            let dw = &path.increments()[..steps];
            for (j, &w) in dw.iter().enumerate() {
                let row = &coef[j * np..(j + 1) * np];
                for (o, c) in out.iter_mut().zip(row) {
                    axpy(&mut o.f, w, c);
                }
            }
        }

        if let Some(jp) = &self.jump {
            let mut dn: Vec<f64> = (0..steps)
                .map(|j| -(self.nodes[j + 1] - self.nodes[j]) * jp.rate)
                .collect();
            for jump in path.jumps() {
                if jump.time > self.t {
                    break;
                }
                if let Some(j) = path.grid().cell_of(jump.time) {
                    dn[j] += jp.psi.eval(jump.mark);
                }
            }
            for (j, &w) in dn.iter().enumerate() {
                let row = &jp.coef[j * np..(j + 1) * np];
                for (o, c) in out.iter_mut().zip(row) {
                    axpy(&mut o.g, w, c);
                }
            }
        }

        if let Some(coef) = &self.h_coef {
            let amp = match self.h_factor {
                RandomFactor::One => 1.0,
                RandomFactor::Gaussian { mean, std } => forcing_factor(path.seed(), mean, std),
            };
            for (o, c) in out.iter_mut().zip(coef) {
                axpy(&mut o.h, amp, c);
            }
        }
        Ok(out)
    }

    /// `∫_0^t P_{t-r} h₁(r)(x) dr` and its gradient, without the random amplitude.
    pub fn h_coefficients(&self) -> Option<&[Triple]> {
        self.h_coef.as_deref()
    }

    pub fn jump_spec(&self) -> Option<&LevyMeasureSpec> {
        self.jump.as_ref().map(|j| &j.spec)
    }
}

/// Graded Gauss-Legendre quadrature in `s = t - r` of the deterministic forcing.
pub(super) fn h_term(
    t: f64,
    coeffs: &Coefficients,
    points: &[[f64; 2]],
    grid: &GridSpec,
    options: PlanOptions,
) -> Result<Vec<Triple>, MildError> {
    let dim = grid.dim();
    let rule = GaussLegendre::new(options.h_order);
    let nodes = graded_rule(t, options.h_cells, options.h_kappa, &rule);
    let h = &coeffs.h.field;
    let partial: Vec<Result<Vec<Triple>, MildError>> = nodes
        .par_iter()
        .map(|&(s, w)| {
            let lattice = Lattice::new(s, grid.dx(), options.points_per_sigma)?;
            let scale = w * h.time.eval(t - s);
            Ok(points
                .iter()
                .map(|p| {
                    triple(
                        convolve_with_lattice(&lattice, &p[..dim], &|z: &[f64]| h.spatial(z), grid),
                        scale,
                    )
                })
                .collect())
        })
        .collect();
    let mut acc = vec![[0.0; 3]; points.len()];
    for row in partial {
        for (a, c) in acc.iter_mut().zip(row?) {
            axpy(a, 1.0, &c);
        }
    }
    Ok(acc)
}
