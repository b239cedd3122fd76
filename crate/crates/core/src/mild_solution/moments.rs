//! Exact `p = 2` gradient moments through the Itô and Poisson isometries.

use rayon::prelude::*;

use super::fields::{Coefficients, HolderField};
use super::plan::{h_term, PlanOptions};
use super::MildError;
use crate::heat_kernel::{convolve_with_lattice, GridSpec, Lattice};
use crate::levy_noise::LevyMeasureSpec;
use crate::quadrature::{dyadic_singular_rule, GaussLegendre};

/// Quadrature parameters of [`second_moment_p2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    pub points_per_sigma: f64,
    /// Dyadic levels below `t` resolved by the time rule.
    pub levels: u32,
    /// Gauss-Legendre points per dyadic cell.
    pub order: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            points_per_sigma: 32.0,
            levels: 60,
            order: 8,
        }
    }
}

/// `∫_0^t c(t-s)² |∇P_sφ(x) - ∇P_sφ(y)|² ds`, or without the `y` term.
pub fn gradient_energy(
    t: f64,
    field: &HolderField,
    x: &[f64],
    y: Option<&[f64]>,
    grid: &GridSpec,
    options: MomentOptions,
) -> Result<f64, MildError> {
    if field.is_zero() || t == 0.0 {
        return Ok(0.0);
    }
    if let Some(y) = y {
        if x == y {
            return Ok(0.0);
        }
    }
    let rule = GaussLegendre::new(options.order);
    let nodes = dyadic_singular_rule(t, &rule, options.levels);
    let dim = grid.dim();
    let phi = |z: &[f64]| field.spatial(z);
    let terms: Vec<Result<f64, MildError>> = nodes
        .par_iter()
        .map(|&(s, w)| {
            let lattice = Lattice::new(s, grid.dx(), options.points_per_sigma)?;
            let gx = convolve_with_lattice(&lattice, x, &phi, grid).gradient;
            let gy = match y {
                Some(y) => convolve_with_lattice(&lattice, y, &phi, grid).gradient,
                None => [0.0; 2],
            };
            let sq: f64 = (0..dim).map(|k| (gx[k] - gy[k]).powi(2)).sum();
            let c = field.time.eval(t - s);
            Ok(w * c * c * sq)
        })
        .collect();
    let mut total = 0.0;
    for term in terms {
        total += term?;
    }
    Ok(total)
}

/// `E|∇u(t,x) - ∇u(t,y)|²` (or `E|∇u(t,x)|²` when `y` is `None`) for the
/// equation without transport term:
///
/// `∫_0^t |D_f(s)|² ds + ∫|ψ|²dν · ∫_0^t |D_φ(s)|² ds + E|h₂|² |D_h|²`,
///
/// where `D` is the subtracted-kernel gradient difference of each term and
/// the last term is the deterministic forcing contribution.
pub fn second_moment_p2(
    t: f64,
    x: &[f64],
    y: Option<&[f64]>,
    coeffs: &Coefficients,
    grid: &GridSpec,
    spec: Option<&LevyMeasureSpec>,
    options: MomentOptions,
) -> Result<f64, MildError> {
    if !(t >= 0.0) {
        return Err(MildError::BeyondPath { t, horizon: 0.0 });
    }
    coeffs.check_horizon(t)?;
    grid.check_point(x)?;
    if let Some(y) = y {
        grid.check_point(y)?;
    }
    let mut total = gradient_energy(t, &coeffs.f, x, y, grid, options)?;
    if let Some(g) = &coeffs.g {
        if !g.phi.is_zero() {
            let spec = spec.ok_or(MildError::MissingLevyMeasure)?;
            total += g.psi.moment(2, spec) * gradient_energy(t, &g.phi, x, y, grid, options)?;
        }
    }
    if !coeffs.h.field.is_zero() && t > 0.0 {
        let pad = |p: &[f64]| [p[0], p.get(1).copied().unwrap_or(0.0)];
        let mut pts = vec![pad(x)];
        if let Some(y) = y {
            pts.push(pad(y));
        }
        let plan_opts = PlanOptions {
            points_per_sigma: options.points_per_sigma,
            ..PlanOptions::default()
        };
        let h = h_term(t, coeffs, &pts, grid, plan_opts)?;
        let diff: f64 = (1..=grid.dim())
            .map(|k| (h[0][k] - h.get(1).map_or(0.0, |r| r[k])).powi(2))
            .sum();
        total += coeffs.h.factor.second_moment() * diff;
    }
    Ok(total)
}
