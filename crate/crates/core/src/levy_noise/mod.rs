//! Wiener increments and finite-activity Poisson random measures with
//! reproducible per-path randomness.

mod measure;
mod path;
pub mod rng;
mod time_grid;

use thiserror::Error;

pub use measure::{LevyDensity, LevyMeasureConfig, LevyMeasureSpec, INVERSE_CDF_POINTS};
pub use path::{forcing_factor, sample_jumps, sample_wiener, JumpEvent, NoisePath, NoiseSampler};
pub use rng::{PathSeed, Purpose};
pub use time_grid::{Grading, TimeGrid};

use crate::quadrature::GaussLegendre;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid Lévy measure: {0}")]
    InvalidMeasure(String),
    #[error("not a Lévy measure: {0}")]
    NotLevy(String),
    #[error("invalid noise path: {0}")]
    InvalidPath(String),
}

/// `∫_0^t ∫_{[ρ,c)} H(r, v) ν(dv) dr`, the deterministic part subtracted from
/// the jump sum. The time integral uses 16 Gauss-Legendre cells of 8 points.
pub fn compensator_integral<H: Fn(f64, f64) -> f64>(integrand: H, spec: &LevyMeasureSpec, t: f64) -> f64 {
    if !(t > 0.0) {
        return 0.0;
    }
    let gl = GaussLegendre::new(8);
    let cells = 16;
    let h = t / cells as f64;
    (0..cells)
        .map(|k| {
            let a = k as f64 * h;
            gl.integrate(a, a + h, |r| spec.integrate(|v| integrand(r, v)))
        })
        .sum()
}
