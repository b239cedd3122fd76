//! Itô and compensated-Poisson integrals of step integrands, and Monte Carlo
//! checks of their second and fourth moment identities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levy_noise::{
    sample_jumps, sample_wiener, JumpEvent, LevyMeasureSpec, NoiseError, NoisePath, PathSeed, TimeGrid,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegralError {
    #[error("invalid integrand: {0}")]
    InvalidIntegrand(String),
    #[error("breakpoint {0} is not a node of the path time grid")]
    Misaligned(f64),
    #[error("integrand horizon {integrand} exceeds path horizon {path}")]
    BeyondHorizon { integrand: f64, path: f64 },
    #[error("mark cell [{0}, {1}) lies outside the support of the Lévy measure")]
    MarkCellOutsideSupport(f64, f64),
    #[error("moment check needs at least {min} paths, got {got}")]
    TooFewPaths { min: usize, got: usize },
    #[error("{kind} needs a {needs} integrand")]
    WrongIntegrand { kind: MomentKind, needs: &'static str },
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

fn check_breakpoints(breakpoints: &[f64], values: usize) -> Result<(), IntegralError> {
    if breakpoints.len() < 2 || breakpoints[0] != 0.0 {
        return Err(IntegralError::InvalidIntegrand(
            "breakpoints must start at 0 and contain at least one interval".into(),
        ));
    }
    if breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(IntegralError::InvalidIntegrand(
            "breakpoints must be strictly increasing".into(),
        ));
    }
    if values != breakpoints.len() - 1 {
        return Err(IntegralError::InvalidIntegrand(format!(
            "{values} time values for {} intervals",
            breakpoints.len() - 1
        )));
    }
    Ok(())
}

/// Node indices of `breakpoints` in `grid`.
fn align(breakpoints: &[f64], grid: &TimeGrid) -> Result<Vec<usize>, IntegralError> {
    let end = breakpoints[breakpoints.len() - 1];
    if end > grid.horizon() * (1.0 + 1e-12) {
        return Err(IntegralError::BeyondHorizon {
            integrand: end,
            path: grid.horizon(),
        });
    }
    breakpoints
        .iter()
        .map(|&b| grid.node_index(b).ok_or(IntegralError::Misaligned(b)))
        .collect()
}

/// `F(r) = Σ_j F_j 1_{(t_{j-1}, t_j]}(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepIntegrandW {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepIntegrandW {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, IntegralError> {
        check_breakpoints(&breakpoints, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IntegralError::InvalidIntegrand("values must be finite".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(t: f64, value: f64) -> Result<Self, IntegralError> {
        Self::new(vec![0.0, t], vec![value])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// `∫ |F|^q dr`.
    pub fn power_integral(&self, q: i32) -> f64 {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, f)| (w[1] - w[0]) * f.abs().powi(q))
            .sum()
    }

    /// `a·self + b·other` on the union of both breakpoint sets.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self, IntegralError> {
        let mut breaks: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let values = breaks
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                a * self.value_at(mid) + b * other.value_at(mid)
            })
            .collect();
        Self::new(breaks, values)
    }

    fn value_at(&self, r: f64) -> f64 {
        self.breakpoints
            .windows(2)
            .position(|w| r > w[0] && r <= w[1])
            .map_or(0.0, |j| self.values[j])
    }
}

/// `H(r, v) = Σ_{i,j} H_{i,j} 1_{(t_{i-1}, t_i]}(r) 1_{E_j}(v)` with disjoint
/// mark cells `E_j = [a_j, b_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepIntegrandN {
    breakpoints: Vec<f64>,
    mark_cells: Vec<(f64, f64)>,
    /// Row `i` holds the values on time interval `i`.
    values: Vec<Vec<f64>>,
}

impl StepIntegrandN {
    pub fn new(
        breakpoints: Vec<f64>,
        mark_cells: Vec<(f64, f64)>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, IntegralError> {
        check_breakpoints(&breakpoints, values.len())?;
        if mark_cells.is_empty() || mark_cells.iter().any(|&(a, b)| !(b > a)) {
            return Err(IntegralError::InvalidIntegrand(
                "mark cells must be non-empty intervals".into(),
            ));
        }
        let mut sorted = mark_cells.clone();
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
        if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(IntegralError::InvalidIntegrand(
                "mark cells must be pairwise disjoint".into(),
            ));
        }
        if values
            .iter()
            .any(|row| row.len() != mark_cells.len() || row.iter().any(|v| !v.is_finite()))
        {
            return Err(IntegralError::InvalidIntegrand(
                "each time interval needs one finite value per mark cell".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            mark_cells,
            values,
        })
    }

    /// Constant `value` on `(0, t] × [ρ, c)`.
    pub fn constant(t: f64, spec: &LevyMeasureSpec, value: f64) -> Result<Self, IntegralError> {
        Self::new(
            vec![0.0, t],
            vec![(spec.inner_cutoff(), spec.outer_radius())],
            vec![vec![value]],
        )
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn mark_cells(&self) -> &[(f64, f64)] {
        &self.mark_cells
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn check_support(&self, spec: &LevyMeasureSpec) -> Result<(), IntegralError> {
        let (rho, c) = (spec.inner_cutoff(), spec.outer_radius());
        match self.mark_cells.iter().find(|&&(a, b)| a < rho || b > c) {
            Some(&(a, b)) => Err(IntegralError::MarkCellOutsideSupport(a, b)),
            None => Ok(()),
        }
    }

    /// `H(r, v)`, zero outside the cells and outside `(0, t]`.
    pub fn value_at(&self, r: f64, v: f64) -> f64 {
        let Some(i) = self.breakpoints.windows(2).position(|w| r > w[0] && r <= w[1]) else {
            return 0.0;
        };
        self.mark_cells
            .iter()
            .position(|&(a, b)| v >= a && v < b)
            .map_or(0.0, |j| self.values[i][j])
    }

    /// `∫_0^t ∫_E |H|^q ν(dv) dr`, exact for step integrands.
    pub fn power_integral(&self, q: i32, spec: &LevyMeasureSpec) -> f64 {
        let masses: Vec<f64> = self.mark_cells.iter().map(|&(a, b)| spec.mass_between(a, b)).collect();
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, row)| (w[1] - w[0]) * row.iter().zip(&masses).map(|(h, m)| h.abs().powi(q) * m).sum::<f64>())
            .sum()
    }

    /// `ν` measure of the union of the cells on which `H` is not identically zero.
    pub fn support_mass(&self, spec: &LevyMeasureSpec) -> f64 {
        self.mark_cells
            .iter()
            .enumerate()
            .filter(|&(j, _)| self.values.iter().any(|row| row[j] != 0.0))
            .map(|(_, &(a, b))| spec.mass_between(a, b))
            .sum()
    }

    fn jump_sum(&self, jumps: &[JumpEvent]) -> f64 {
        jumps.iter().map(|j| self.value_at(j.time, j.mark)).sum()
    }
}

/// `Σ_j F_j (W_{t_j} - W_{t_{j-1}})`.
pub fn ito_integral(integrand: &StepIntegrandW, path: &NoisePath) -> Result<f64, IntegralError> {
    let nodes = align(&integrand.breakpoints, path.grid())?;
    Ok(nodes
        .windows(2)
        .zip(&integrand.values)
        .map(|(w, f)| f * path.wiener_between(w[0], w[1]))
        .sum())
}

/// Sum of `H` over the jumps minus `∫∫ H ν(dv) dr`.
pub fn poisson_integral(
    integrand: &StepIntegrandN,
    path: &NoisePath,
    spec: &LevyMeasureSpec,
) -> Result<f64, IntegralError> {
    align(&integrand.breakpoints, path.grid())?;
    integrand.check_support(spec)?;
    Ok(integrand.jump_sum(path.jumps()) - signed_compensator(integrand, spec))
}

/// `∫∫ H ν(dv) dr`, exact for step integrands.
fn signed_compensator(integrand: &StepIntegrandN, spec: &LevyMeasureSpec) -> f64 {
    let masses: Vec<f64> = integrand
        .mark_cells
        .iter()
        .map(|&(a, b)| spec.mass_between(a, b))
        .collect();
    integrand
        .breakpoints
        .windows(2)
        .zip(&integrand.values)
        .map(|(w, row)| (w[1] - w[0]) * row.iter().zip(&masses).map(|(h, m)| h * m).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    ItoIsometry,
    ItoP4Bound,
    PoissonIsometry,
    PoissonP4Bound,
}

impl MomentKind {
    pub const ALL: [MomentKind; 4] = [
        MomentKind::ItoIsometry,
        MomentKind::ItoP4Bound,
        MomentKind::PoissonIsometry,
        MomentKind::PoissonP4Bound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MomentKind::ItoIsometry => "ito_isometry",
            MomentKind::ItoP4Bound => "ito_p4_bound",
            MomentKind::PoissonIsometry => "poisson_isometry",
            MomentKind::PoissonP4Bound => "poisson_p4_bound",
        }
    }

    pub fn is_bound(self) -> bool {
        matches!(self, MomentKind::ItoP4Bound | MomentKind::PoissonP4Bound)
    }
}

impl fmt::Display for MomentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MomentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MomentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown moment kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Integrand {
    Wiener(StepIntegrandW),
    Poisson(StepIntegrandN),
}

/// Minimum path count accepted by [`check_moment_identity`].
pub const MIN_PATHS: usize = 10_000;

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MonteCarloEstimate {
    /// Two-pass mean and variance, summed in index order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                samples: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

/// Per-path integral values for path indices `0..paths`, in index order.
/// Only the noise source the integrand needs is sampled.
pub fn sample_integrals(
    integrand: &Integrand,
    spec: Option<&LevyMeasureSpec>,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>, IntegralError> {
    match integrand {
        Integrand::Wiener(f) => {
            let grid = TimeGrid::from_nodes(f.breakpoints.clone())?;
            Ok((0..paths as u64)
                .into_par_iter()
                .map(|i| {
                    let inc = sample_wiener(&grid, PathSeed::new(seed, i));
                    inc.iter().zip(&f.values).map(|(dw, v)| v * dw).sum()
                })
                .collect())
        }
        Integrand::Poisson(h) => {
            let spec =
                spec.ok_or_else(|| IntegralError::InvalidIntegrand("Poisson integrand without Lévy measure".into()))?;
            h.check_support(spec)?;
            let compensator = signed_compensator(h, spec);
            let t = h.horizon();
            Ok((0..paths as u64)
                .into_par_iter()
                .map(|i| h.jump_sum(&sample_jumps(t, spec, PathSeed::new(seed, i))) - compensator)
                .collect())
        }
    }
}

/// Outcome of one moment check; one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub kind: MomentKind,
    pub target: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
    pub pass: bool,
}

/// Target for each kind, together with the deterministic quantity it scales:
///
/// * `ito_isometry`: `∫F²`
/// * `ito_p4_bound`: `6 (∫F²)²`, the exact value being `3 (∫F²)²`
/// * `poisson_isometry`: `∫∫H²ν`
/// * `poisson_p4_bound`: `C ∫∫H⁴ν` with `C = 1 + 3 t ν(supp H)`; the exact
///   value is `∫∫H⁴ν + 3(∫∫H²ν)²` and Cauchy-Schwarz on the finite-measure
///   support gives `(∫∫H²ν)² ≤ t ν(supp H) ∫∫H⁴ν`.
pub fn moment_target(
    kind: MomentKind,
    integrand: &Integrand,
    spec: Option<&LevyMeasureSpec>,
) -> Result<f64, IntegralError> {
    match (kind, integrand) {
        (MomentKind::ItoIsometry, Integrand::Wiener(f)) => Ok(f.power_integral(2)),
        (MomentKind::ItoP4Bound, Integrand::Wiener(f)) => Ok(6.0 * f.power_integral(2).powi(2)),
        (MomentKind::PoissonIsometry, Integrand::Poisson(h)) => Ok(h.power_integral(2, need_spec(spec)?)),
        (MomentKind::PoissonP4Bound, Integrand::Poisson(h)) => {
            let spec = need_spec(spec)?;
            Ok(poisson_p4_constant(h, spec) * h.power_integral(4, spec))
        }
        (k, _) => Err(IntegralError::WrongIntegrand {
            kind: k,
            needs: if matches!(k, MomentKind::ItoIsometry | MomentKind::ItoP4Bound) {
                "Wiener"
            } else {
                "Poisson"
            },
        }),
    }
}

/// `1 + 3 t ν(supp H)`.
pub fn poisson_p4_constant(integrand: &StepIntegrandN, spec: &LevyMeasureSpec) -> f64 {
    1.0 + 3.0 * integrand.horizon() * integrand.support_mass(spec)
}

fn need_spec(spec: Option<&LevyMeasureSpec>) -> Result<&LevyMeasureSpec, IntegralError> {
    spec.ok_or_else(|| IntegralError::InvalidIntegrand("Poisson integrand without Lévy measure".into()))
}

/// Monte Carlo estimate of `E|I|²` or `E|I|⁴` compared with [`moment_target`].
/// Equalities pass within three standard errors; bounds pass when
/// `estimate ≤ target·(1 + 3·std_error/estimate)`.
pub fn check_moment_identity(
    kind: MomentKind,
    integrand: &Integrand,
    spec: Option<&LevyMeasureSpec>,
    paths: usize,
    seed: u64,
) -> Result<MomentReport, IntegralError> {
    if paths < MIN_PATHS {
        return Err(IntegralError::TooFewPaths {
            min: MIN_PATHS,
            got: paths,
        });
    }
    let target = moment_target(kind, integrand, spec)?;
    let power = if kind.is_bound() { 4 } else { 2 };
    let values: Vec<f64> = sample_integrals(integrand, spec, paths, seed)?
        .into_iter()
        .map(|x| x.powi(power))
        .collect();
    let est = MonteCarloEstimate::from_samples(&values);
    let pass = if kind.is_bound() {
        let rel = if est.mean > 0.0 { est.std_error / est.mean } else { 0.0 };
        est.mean <= target * (1.0 + 3.0 * rel)
    } else {
        (est.mean - target).abs() <= 3.0 * est.std_error
    };
    Ok(MomentReport {
        kind,
        target,
        estimate: est.mean,
        std_error: est.std_error,
        paths,
        seed,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_noise::NoiseSampler;
    use std::sync::Arc;

    fn spec2() -> LevyMeasureSpec {
        LevyMeasureSpec::uniform(0.5, 1.0, 2.0).unwrap()
    }

    #[test]
    fn zero_integrands_vanish() {
        let sampler = NoiseSampler::new(TimeGrid::uniform(1.0, 4).unwrap(), Some(spec2()), 1);
        let path = sampler.path(3);
        let f = StepIntegrandW::constant(1.0, 0.0).unwrap();
        assert_eq!(ito_integral(&f, &path).unwrap(), 0.0);
        let h = StepIntegrandN::constant(1.0, &spec2(), 0.0).unwrap();
        assert_eq!(poisson_integral(&h, &path, &spec2()).unwrap(), 0.0);
    }

    #[test]
    fn misaligned_breakpoints_are_rejected() {
        let sampler = NoiseSampler::new(TimeGrid::uniform(1.0, 4).unwrap(), None, 1);
        let f = StepIntegrandW::new(vec![0.0, 0.3, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(ito_integral(&f, &sampler.path(0)), Err(IntegralError::Misaligned(0.3)));
        let long = StepIntegrandW::constant(2.0, 1.0).unwrap();
        assert!(matches!(
            ito_integral(&long, &sampler.path(0)),
            Err(IntegralError::BeyondHorizon { .. })
        ));
    }

    #[test]
    fn mark_cells_outside_support_are_rejected() {
        let h = StepIntegrandN::new(vec![0.0, 1.0], vec![(0.1, 0.6)], vec![vec![1.0]]).unwrap();
        let sampler = NoiseSampler::new(TimeGrid::uniform(1.0, 2).unwrap(), Some(spec2()), 0);
        assert_eq!(
            poisson_integral(&h, &sampler.path(0), &spec2()),
            Err(IntegralError::MarkCellOutsideSupport(0.1, 0.6))
        );
        assert!(StepIntegrandN::new(vec![0.0, 1.0], vec![(0.5, 0.8), (0.7, 0.9)], vec![vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn ito_integral_is_weighted_increment_sum() {
        let sampler = NoiseSampler::new(TimeGrid::uniform(1.0, 4).unwrap(), None, 9);
        let path = sampler.path(0);
        let f = StepIntegrandW::new(vec![0.0, 0.5, 1.0], vec![1.0, -2.0]).unwrap();
        let inc = path.increments();
        let expected = (inc[0] + inc[1]) - 2.0 * (inc[2] + inc[3]);
        assert!((ito_integral(&f, &path).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn poisson_integral_matches_hand_computation() {
        let spec = spec2();
        let grid = Arc::new(TimeGrid::uniform(1.0, 2).unwrap());
        let jumps = vec![JumpEvent { time: 0.2, mark: 0.6 }, JumpEvent { time: 0.7, mark: 0.9 }];
        let path = NoisePath::from_parts(grid, vec![0.0, 0.0], jumps, PathSeed::new(0, 0)).unwrap();
        let h = StepIntegrandN::new(
            vec![0.0, 0.5, 1.0],
            vec![(0.5, 0.75), (0.75, 1.0)],
            vec![vec![1.0, 2.0], vec![3.0, -4.0]],
        )
        .unwrap();
        // Each cell carries ν mass 1 and each time interval has length 0.5.
        let compensator = 0.5 * (1.0 + 2.0) + 0.5 * (3.0 - 4.0);
        let got = poisson_integral(&h, &path, &spec).unwrap();
        assert!((got - (1.0 - 4.0 - compensator)).abs() < 1e-12);
        let samples = sample_integrals(&Integrand::Poisson(h.clone()), Some(&spec), 4, 5).unwrap();
        assert_eq!(samples.len(), 4);
    }

    #[test]
    fn targets_have_closed_forms() {
        let f = Integrand::Wiener(StepIntegrandW::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap());
        assert!((moment_target(MomentKind::ItoIsometry, &f, None).unwrap() - 2.5).abs() < 1e-15);
        assert!((moment_target(MomentKind::ItoP4Bound, &f, None).unwrap() - 37.5).abs() < 1e-12);
        let spec = spec2();
        let h = Integrand::Poisson(StepIntegrandN::constant(1.0, &spec, 1.0).unwrap());
        assert!((moment_target(MomentKind::PoissonIsometry, &h, Some(&spec)).unwrap() - 2.0).abs() < 1e-12);
        assert!((moment_target(MomentKind::PoissonP4Bound, &h, Some(&spec)).unwrap() - 14.0).abs() < 1e-12);
        assert!(moment_target(MomentKind::PoissonIsometry, &f, Some(&spec)).is_err());
    }

    #[test]
    fn too_few_paths_is_an_error() {
        let f = Integrand::Wiener(StepIntegrandW::constant(1.0, 1.0).unwrap());
        assert!(matches!(
            check_moment_identity(MomentKind::ItoIsometry, &f, None, 10, 0),
            Err(IntegralError::TooFewPaths { .. })
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MomentKind::ALL {
            assert_eq!(k.name().parse::<MomentKind>().unwrap(), k);
        }
    }
}
