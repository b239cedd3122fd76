//! Hölder exponents of the gradient from increment moments, and the
//! optimality construction for the capped power field.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heat_kernel::GridSpec;
use crate::levy_noise::{Grading, LevyMeasureSpec, NoiseSampler, TimeGrid};
use crate::mild_solution::{
    second_moment_p2, Coefficients, HolderField, MarkFactor, MildError, MildPlan, MomentOptions, PlanOptions,
};
use crate::stochastic_integrals::MonteCarloEstimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error(transparent)]
    Mild(#[from] MildError),
    #[error("gamma = alpha + 2/p - 1 must be positive (alpha = {alpha}, p = {p}, gamma = {gamma})")]
    NonPositiveGamma { alpha: f64, p: f64, gamma: f64 },
    #[error("drift exponent beta = {beta} must lie in (0, gamma = {gamma})")]
    BetaOutOfRange { beta: f64, gamma: f64 },
    #[error("moment order p = {0} must be at least 2")]
    MomentOrder(f64),
    #[error("distance {delta} is below twice the grid spacing {dx}")]
    Resolution { delta: f64, dx: f64 },
    #[error("log-log fit needs at least 4 rows with positive moments, got {0}")]
    TooFewRows(usize),
    #[error("the quadrature pathway is exact only for p = 2, got p = {0}")]
    ExactNeedsP2(f64),
    #[error("probe exponent delta = {delta} is below alpha = {alpha}")]
    ProbeBelowAlpha { alpha: f64, delta: f64 },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pathway {
    /// Isometry quadrature, `p = 2` only.
    #[default]
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityConfig {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub t: f64,
    pub anchor: Vec<f64>,
    #[serde(default)]
    pub axis: usize,
    pub k_min: u32,
    pub k_max: u32,
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub pathway: Pathway,
    /// Cells of the graded Monte Carlo time grid.
    #[serde(default = "default_time_steps")]
    pub time_steps: usize,
    #[serde(default = "default_points_per_sigma")]
    pub points_per_sigma: f64,
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_time_steps() -> usize {
    MC_TIME_STEPS
}

fn default_points_per_sigma() -> f64 {
    32.0
}

/// Cells of the graded Monte Carlo time grid. The left-endpoint sum loses
/// about `ln m / m` of the gradient variance near the kernel singularity;
/// at this size the loss is near 1%.
pub const MC_TIME_STEPS: usize = 16_384;

/// Slope standard error above which a Monte Carlo fit is reported inconclusive.
pub const MAX_SLOPE_STD_ERROR: f64 = 0.1;

/// Fractions of `γ` probed below the exponent.
pub const EPSILON_FRACTIONS: [f64; 3] = [0.125, 0.25, 0.5];

impl RegularityConfig {
    pub fn gamma(&self) -> f64 {
        gamma(self.alpha, self.p)
    }

    pub fn predicted_slope(&self) -> f64 {
        self.gamma() * self.p
    }

    pub fn deltas(&self) -> Vec<(u32, f64)> {
        (self.k_min..=self.k_max).map(|k| (k, 2f64.powi(-(k as i32)))).collect()
    }

    /// `p ≥ 2` and `γ > 0`; with `drift` also `0 < β < γ`.
    pub fn validate(&self, drift: bool) -> Result<(), RegularityError> {
        if !(self.p >= 2.0) {
            return Err(RegularityError::MomentOrder(self.p));
        }
        let gamma = self.gamma();
        if !(gamma > 0.0) {
            return Err(RegularityError::NonPositiveGamma {
                alpha: self.alpha,
                p: self.p,
                gamma,
            });
        }
        if drift && !(self.beta > 0.0 && self.beta < gamma) {
            return Err(RegularityError::BetaOutOfRange { beta: self.beta, gamma });
        }
        if self.k_min > self.k_max || !(self.t > 0.0) {
            return Err(RegularityError::Invalid("need k_min ≤ k_max and t > 0".into()));
        }
        Ok(())
    }
}

/// `α + 2/p − 1`.
pub fn gamma(alpha: f64, p: f64) -> f64 {
    alpha + 2.0 / p - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityRow {
    pub k: u32,
    pub delta: f64,
    pub moment: f64,
    pub std_error: f64,
    pub in_fit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_error: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// All increments vanish; nothing to fit.
    Degenerate,
    /// Slope standard error too large to decide.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCheck {
    pub epsilon: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub rows: Vec<RegularityRow>,
    pub fit: Option<LogLogFit>,
    pub gamma: f64,
    pub p: f64,
    pub predicted_slope: f64,
    pub pathway: Pathway,
    pub verdict: Verdict,
    pub epsilon_checks: Vec<EpsilonCheck>,
}

impl RegularityReport {
    pub fn pass(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Ordinary least squares of `log m` on `log δ`. Rows with a non-positive
/// moment are dropped with a warning.
pub fn fit_loglog(rows: &[(f64, f64)]) -> Result<LogLogFit, RegularityError> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|&&(d, m)| {
            let keep = d > 0.0 && m > 0.0 && m.is_finite();
            if !keep {
                log::warn!("dropping row (delta = {d}, moment = {m}) from log-log fit");
            }
            keep
        })
        .map(|&(d, m)| (d.ln(), m.ln()))
        .collect();
    let n = pts.len();
    if n < 4 {
        return Err(RegularityError::TooFewRows(n));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
        slope_std_error: (sse / (nf - 2.0) / sxx).sqrt(),
        rows: n,
    })
}

fn offset_point(anchor: &[f64], axis: usize, delta: f64) -> Vec<f64> {
    let mut x = anchor.to_vec();
    x[axis] += delta;
    x
}

/// Increment moments `E|∇u(t, x₀+δ_k e) − ∇u(t, x₀)|^p`, their log-log fit,
/// and the comparison with `γ·p`.
pub fn estimate_seminorm(
    config: &RegularityConfig,
    coeffs: &Coefficients,
    grid: &GridSpec,
    spec: Option<&LevyMeasureSpec>,
) -> Result<RegularityReport, RegularityError> {
    config.validate(false)?;
    if config.anchor.len() != grid.dim() || config.axis >= grid.dim() {
        return Err(RegularityError::Invalid(
            "anchor and axis must match the grid dimension".into(),
        ));
    }
    let dx = grid.dx();
    let deltas = config.deltas();
    if let Some(&(_, delta)) = deltas.iter().find(|&&(_, d)| d < 2.0 * dx) {
        return Err(RegularityError::Resolution { delta, dx });
    }
    let estimates: Vec<(f64, f64)> = match config.pathway {
        Pathway::Exact => {
            if config.p != 2.0 {
                return Err(RegularityError::ExactNeedsP2(config.p));
            }
            let options = MomentOptions {
                points_per_sigma: config.points_per_sigma,
                ..MomentOptions::default()
            };
            deltas
                .iter()
                .map(|&(_, d)| {
                    let x = offset_point(&config.anchor, config.axis, d);
                    Ok((
                        second_moment_p2(config.t, &x, Some(&config.anchor), coeffs, grid, spec, options)?,
                        0.0,
                    ))
                })
                .collect::<Result<_, RegularityError>>()?
        }
        Pathway::MonteCarlo => monte_carlo_moments(config, coeffs, grid, spec, &deltas)?,
    };
    let rows: Vec<RegularityRow> = deltas
        .iter()
        .zip(&estimates)
        .map(|(&(k, delta), &(moment, std_error))| RegularityRow {
            k,
            delta,
            moment,
            std_error,
            in_fit: delta >= 4.0 * dx,
        })
        .collect();
    let gamma = config.gamma();
    let predicted_slope = config.predicted_slope();
    let base = RegularityReport {
        rows: rows.clone(),
        fit: None,
        gamma,
        p: config.p,
        predicted_slope,
        pathway: config.pathway,
        verdict: Verdict::Degenerate,
        epsilon_checks: Vec::new(),
    };
    if rows.iter().all(|r| r.moment == 0.0) {
        return Ok(base);
    }
    let fit_rows: Vec<(f64, f64)> = rows.iter().filter(|r| r.in_fit).map(|r| (r.delta, r.moment)).collect();
    let fit = fit_loglog(&fit_rows)?;
    let verdict = if config.pathway == Pathway::MonteCarlo && fit.slope_std_error > MAX_SLOPE_STD_ERROR {
        Verdict::Inconclusive
    } else if (fit.slope - predicted_slope).abs() <= config.tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let epsilon_checks = EPSILON_FRACTIONS
        .iter()
        .map(|&frac| {
            let epsilon = frac * gamma;
            let threshold = (gamma - epsilon) * config.p - config.tolerance;
            EpsilonCheck {
                epsilon,
                threshold,
                pass: fit.slope >= threshold,
            }
        })
        .collect();
    Ok(RegularityReport {
        fit: Some(fit),
        verdict,
        epsilon_checks,
        ..base
    })
}

/// Graded time grid toward `t` used by the Monte Carlo pathway.
pub fn monte_carlo_time_grid(t: f64, steps: usize) -> Result<TimeGrid, RegularityError> {
    TimeGrid::new(t, steps, Grading::TowardHorizon { kappa: 2.0 }).map_err(|e| RegularityError::Mild(e.into()))
}

/// Per-path `|∇u(x) − ∇u(y)|` for each `(x, y)` pair, paths `0..paths` in order.
#[allow(clippy::too_many_arguments)]
pub fn gradient_increments(
    t: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    coeffs: &Coefficients,
    grid: &GridSpec,
    spec: Option<&LevyMeasureSpec>,
    time_grid: TimeGrid,
    options: PlanOptions,
    paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, RegularityError> {
    let dim = grid.dim();
    let pad = |p: &[f64]| [p[0], p.get(1).copied().unwrap_or(0.0)];
    let points: Vec<[f64; 2]> = pairs.iter().flat_map(|(x, y)| [pad(x), pad(y)]).collect();
    let plan = MildPlan::new(t, coeffs, &points, grid, &time_grid, spec, options)?;
    let sampler = NoiseSampler::new(time_grid, spec.cloned(), seed);
    (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let terms = plan.apply(&sampler.path(i))?;
            Ok(terms
                .chunks(2)
                .map(|c| {
                    let (a, b) = (c[0].total(), c[1].total());
                    (1..=dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
                })
                .collect())
        })
        .collect()
}

fn monte_carlo_moments(
    config: &RegularityConfig,
    coeffs: &Coefficients,
    grid: &GridSpec,
    spec: Option<&LevyMeasureSpec>,
    deltas: &[(u32, f64)],
) -> Result<Vec<(f64, f64)>, RegularityError> {
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = deltas
        .iter()
        .map(|&(_, d)| (offset_point(&config.anchor, config.axis, d), config.anchor.clone()))
        .collect();
    let options = PlanOptions {
        points_per_sigma: config.points_per_sigma,
        ..PlanOptions::default()
    };
    let per_path = gradient_increments(
        config.t,
        &pairs,
        coeffs,
        grid,
        spec,
        monte_carlo_time_grid(config.t, config.time_steps)?,
        options,
        config.paths,
        config.seed,
    )?;
    Ok((0..deltas.len())
        .map(|k| {
            let samples: Vec<f64> = per_path.iter().map(|row| row[k].powf(config.p)).collect();
            let est = MonteCarloEstimate::from_samples(&samples);
            (est.mean, est.std_error)
        })
        .collect())
}

/// Noise driving the optimality construction.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimalityNoise {
    /// `f = min(x₊^α, 1)`, no jumps.
    Wiener,
    /// `g(x, v) = min(x₊^α, 1)·g₁(v)` with `g₁` rescaled to unit `L²(ν)` norm, `f = 0`.
    Jump { spec: LevyMeasureSpec, shape: MarkFactor },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalityRow {
    pub k: u32,
    pub x: f64,
    pub moment: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityTable {
    pub alpha: f64,
    pub delta: f64,
    pub t: f64,
    pub rows: Vec<OptimalityRow>,
    pub slope: f64,
    pub predicted_slope: f64,
    /// `max ratio / min ratio` over the table.
    pub band: f64,
    pub pass: bool,
}

/// Band factor allowed for the ratio at `δ = α`.
pub const CRITICAL_BAND: f64 = 4.0;

/// `ratio(x) = sqrt(E|∂u(t,x) − ∂u(t,0)|²) / x^δ` for `x = 2^{-k}`, with the
/// log-log slope of the ratio and its spread. For `δ > α` the slope should be
/// `α − δ`; for `δ = α` the ratio should stay within a bounded band.
#[allow(clippy::too_many_arguments)]
pub fn optimality_experiment(
    alpha: f64,
    delta: f64,
    t: f64,
    grid: &GridSpec,
    noise: &OptimalityNoise,
    ks: std::ops::RangeInclusive<u32>,
    tolerance: f64,
    options: MomentOptions,
) -> Result<OptimalityTable, RegularityError> {
    if !(alpha > 0.0 && alpha < 1.0 && delta < 1.0) {
        return Err(RegularityError::Invalid("need 0 < alpha < 1 and delta < 1".into()));
    }
    if delta < alpha {
        return Err(RegularityError::ProbeBelowAlpha { alpha, delta });
    }
    if grid.dim() != 1 {
        return Err(RegularityError::Invalid(
            "the optimality construction is one-dimensional".into(),
        ));
    }
    let field = HolderField::capped_power(alpha);
    let (coeffs, spec) = match noise {
        OptimalityNoise::Wiener => (Coefficients::zero().with_f(field), None),
        OptimalityNoise::Jump { spec, shape } => {
            (Coefficients::zero().with_g(field, shape.normalized(spec)?), Some(spec))
        }
    };
    let rows: Vec<OptimalityRow> = ks
        .map(|k| {
            let x = 2f64.powi(-(k as i32));
            if x < 2.0 * grid.dx() {
                return Err(RegularityError::Resolution {
                    delta: x,
                    dx: grid.dx(),
                });
            }
            let moment = second_moment_p2(t, &[x], Some(&[0.0]), &coeffs, grid, spec, options)?;
            Ok(OptimalityRow {
                k,
                x,
                moment,
                ratio: moment.sqrt() / x.powf(delta),
            })
        })
        .collect::<Result<_, RegularityError>>()?;
    let fit = fit_loglog(&rows.iter().map(|r| (r.x, r.ratio)).collect::<Vec<_>>())?;
    let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| {
        (lo.min(r.ratio), hi.max(r.ratio))
    });
    let band = hi / lo;
    let predicted_slope = alpha - delta;
    let pass = if delta > alpha {
        (fit.slope - predicted_slope).abs() <= tolerance
    } else {
        band <= CRITICAL_BAND
    };
    Ok(OptimalityTable {
        alpha,
        delta,
        t,
        rows,
        slope: fit.slope,
        predicted_slope,
        band,
        pass,
    })
}
