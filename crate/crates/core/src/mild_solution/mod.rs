//! Mild solution of the equation without transport term, its gradient, and
//! exact second moments of gradient increments.

mod fields;
mod moments;
mod plan;

use std::io::Write;

use thiserror::Error;

pub use fields::{
    Coefficients, DeclaredCheck, FieldSpec, Forcing, HolderField, HolderMeta, JumpCoefficient, MarkFactor,
    RandomFactor, TimeFactor, CHECK_RANDOM_PAIRS,
};
pub use moments::{gradient_energy, second_moment_p2, MomentOptions};
pub use plan::{MildPlan, PlanOptions, PointTerms, Triple};

use crate::heat_kernel::{GridField, GridSpec, KernelError};
use crate::levy_noise::{LevyMeasureSpec, NoiseError, NoisePath, PathSeed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MildError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("field is defined up to t = {field}, requested t = {requested}")]
    FieldHorizon { field: f64, requested: f64 },
    #[error("time {t} lies outside the path horizon {horizon}")]
    BeyondPath { t: f64, horizon: f64 },
    #[error("time {0} is not a node of the path time grid")]
    NotANode(f64),
    #[error("noise path was sampled on a different time grid")]
    PathMismatch,
    #[error("jump coefficient given without a Lévy measure")]
    MissingLevyMeasure,
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
}

/// Value and gradient of one contributing term on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TermField {
    pub value: GridField,
    pub gradient: Vec<GridField>,
}

impl TermField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            value: GridField::zeros(grid),
            gradient: (0..grid.dim()).map(|_| GridField::zeros(grid)).collect(),
        }
    }

    fn from_triples(grid: GridSpec, values: impl Iterator<Item = Triple> + Clone) -> Self {
        let collect = |k: usize| {
            GridField::from_values(grid, values.clone().map(|v| v[k]).collect()).expect("one value per node")
        };
        Self {
            value: collect(0),
            gradient: (1..=grid.dim()).map(collect).collect(),
        }
    }
}

/// `u(t, ·)` and `∇u(t, ·)` on the grid for one noise path, with the
/// transport, `h`, `f` and `g` contributions kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSample {
    pub t: f64,
    pub seed: PathSeed,
    pub u: GridField,
    pub gradient: Vec<GridField>,
    pub drift: TermField,
    pub h: TermField,
    pub f: TermField,
    pub g: TermField,
}

impl SolutionSample {
    /// Assembles `u = drift + h + f + g` node-wise in that order.
    pub fn from_terms(t: f64, seed: PathSeed, drift: TermField, h: TermField, f: TermField, g: TermField) -> Self {
        let grid = *drift.value.grid();
        let sum = |pick: &dyn Fn(&TermField) -> &GridField| {
            let parts = [
                pick(&drift).values(),
                pick(&h).values(),
                pick(&f).values(),
                pick(&g).values(),
            ];
            let values = (0..grid.len())
                .map(|i| parts[0][i] + parts[1][i] + parts[2][i] + parts[3][i])
                .collect();
            GridField::from_values(grid, values).expect("one value per node")
        };
        let u = sum(&|t: &TermField| &t.value);
        let gradient = (0..grid.dim()).map(|k| sum(&|t: &TermField| &t.gradient[k])).collect();
        Self {
            t,
            seed,
            u,
            gradient,
            drift,
            h,
            f,
            g,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.u.grid()
    }

    /// True when re-summing the stored terms reproduces `u` bit for bit.
    pub fn terms_consistent(&self) -> bool {
        let again = Self::from_terms(
            self.t,
            self.seed,
            self.drift.clone(),
            self.h.clone(),
            self.f.clone(),
            self.g.clone(),
        );
        again.u == self.u && again.gradient == self.gradient
    }

    pub fn all_finite(&self) -> bool {
        self.u
            .values()
            .iter()
            .chain(self.gradient.iter().flat_map(|g| g.values()))
            .all(|v| v.is_finite())
    }

    /// One row per node: coordinates, `u`, gradient components, then the
    /// `drift`, `h`, `f`, `g` value terms.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let grid = *self.grid();
        let dim = grid.dim();
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..dim).map(|k| format!("x{k}")).collect();
        header.push("u".into());
        header.extend((0..dim).map(|k| format!("du{k}")));
        header.extend(["drift", "h", "f", "g"].map(String::from));
        out.write_record(&header)?;
        for idx in 0..grid.len() {
            let p = grid.point(idx);
            let mut row: Vec<f64> = p[..dim].to_vec();
            row.push(self.u.values()[idx]);
            row.extend(self.gradient.iter().map(|g| g.values()[idx]));
            for term in [&self.drift, &self.h, &self.f, &self.g] {
                row.push(term.value.values()[idx]);
            }
            out.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Every grid node as a plan point.
pub fn grid_points(grid: &GridSpec) -> Vec<[f64; 2]> {
    (0..grid.len()).map(|i| grid.point(i)).collect()
}

/// `u(t, ·)` and `∇u(t, ·)` on all grid nodes for one path. `t` must be a
/// node of the path's time grid.
pub fn evaluate_mild(
    t: f64,
    coeffs: &Coefficients,
    path: &NoisePath,
    grid: &GridSpec,
    spec: Option<&LevyMeasureSpec>,
) -> Result<SolutionSample, MildError> {
    evaluate_mild_with(t, coeffs, path, grid, spec, PlanOptions::default())
}

pub fn evaluate_mild_with(
    t: f64,
    coeffs: &Coefficients,
    path: &NoisePath,
    grid: &GridSpec,
    spec: Option<&LevyMeasureSpec>,
    options: PlanOptions,
) -> Result<SolutionSample, MildError> {
    let plan = MildPlan::new(t, coeffs, &grid_points(grid), grid, path.grid(), spec, options)?;
    sample_from_plan(&plan, path, grid)
}

/// Applies a plan built on all grid nodes to one path.
pub fn sample_from_plan(plan: &MildPlan, path: &NoisePath, grid: &GridSpec) -> Result<SolutionSample, MildError> {
    let terms = plan.apply(path)?;
    if terms.len() != grid.len() {
        return Err(MildError::InvalidCoefficient(
            "plan points are not the grid nodes".into(),
        ));
    }
    let pick = |sel: fn(&PointTerms) -> Triple| TermField::from_triples(*grid, terms.iter().map(sel));
    Ok(SolutionSample::from_terms(
        plan.time(),
        path.seed(),
        TermField::zeros(*grid),
        pick(|p| p.h),
        pick(|p| p.f),
        pick(|p| p.g),
    ))
}

/// Gradient components of `u(t, ·)` on the grid.
pub fn evaluate_gradient(
    t: f64,
    coeffs: &Coefficients,
    path: &NoisePath,
    grid: &GridSpec,
    spec: Option<&LevyMeasureSpec>,
) -> Result<Vec<GridField>, MildError> {
    Ok(evaluate_mild(t, coeffs, path, grid, spec)?.gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_noise::{NoiseSampler, TimeGrid};

    fn grid1() -> GridSpec {
        GridSpec::covering(1, 3.0, 0.1).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let spec = LevyMeasureSpec::uniform(0.5, 1.0, 2.0).unwrap();
        let sampler = NoiseSampler::new(TimeGrid::uniform(0.25, 16).unwrap(), Some(spec.clone()), 4);
        let coeffs = Coefficients::zero().with_g(HolderField::zero(), MarkFactor::Constant { value: 1.0 });
        let s = evaluate_mild(0.25, &coeffs, &sampler.path(0), &grid1(), Some(&spec)).unwrap();
        assert!(s.u.values().iter().all(|&v| v == 0.0));
        assert!(s.gradient[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_noise_coefficient_gives_brownian_value() {
        let grid_t = TimeGrid::uniform(0.5, 32).unwrap();
        let sampler = NoiseSampler::new(grid_t, None, 7);
        let path = sampler.path(3);
        let coeffs = Coefficients::zero().with_f(HolderField::constant(1.0));
        let s = evaluate_mild(0.5, &coeffs, &path, &grid1(), None).unwrap();
        let w: f64 = path.increments().iter().sum();
        assert!(s.u.values().iter().all(|&v| (v - w).abs() < 1e-8));
        assert!(s.gradient[0].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_forcing_integrates_time() {
        let sampler = NoiseSampler::new(TimeGrid::uniform(0.75, 3).unwrap(), None, 0);
        let coeffs = Coefficients::zero().with_h(HolderField::constant(1.0));
        let s = evaluate_mild(0.75, &coeffs, &sampler.path(0), &grid1(), None).unwrap();
        assert!(s.u.values().iter().all(|&v| (v - 0.75).abs() < 1e-6));
    }

    #[test]
    fn linear_noise_coefficient_has_brownian_gradient() {
        let sampler = NoiseSampler::new(TimeGrid::uniform(0.25, 8).unwrap(), None, 1);
        let path = sampler.path(0);
        let coeffs = Coefficients::zero().with_f(HolderField::new(FieldSpec::Linear {
            slope: vec![1.0],
            offset: 0.0,
        }));
        let grid = grid1();
        let s = evaluate_mild(0.25, &coeffs, &path, &grid, None).unwrap();
        let w: f64 = path.increments().iter().sum();
        for idx in 0..grid.len() {
            if grid.is_interior(idx, 6.0 * 0.5) {
                assert!((s.gradient[0].values()[idx] - w).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn terms_sum_to_solution_and_csv_has_all_rows() {
        let spec = LevyMeasureSpec::uniform(0.5, 1.0, 3.0).unwrap();
        let sampler = NoiseSampler::new(TimeGrid::uniform(0.2, 8).unwrap(), Some(spec.clone()), 2);
        let coeffs = Coefficients::zero()
            .with_h(HolderField::new(FieldSpec::Sine {
                amplitude: 1.0,
                frequency: 2.0,
                phase: 0.0,
                axis: 0,
            }))
            .with_h_factor(RandomFactor::Gaussian { mean: 1.0, std: 0.5 })
            .with_f(HolderField::capped_power(0.5))
            .with_g(
                HolderField::capped_power(0.5),
                MarkFactor::Power {
                    scale: 1.0,
                    exponent: 1.0,
                },
            );
        let grid = grid1();
        let s = evaluate_mild(0.2, &coeffs, &sampler.path(1), &grid, Some(&spec)).unwrap();
        assert!(s.terms_consistent());
        assert!(s.all_finite());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), grid.len() + 1);
    }

    #[test]
    fn evaluation_time_must_be_a_node() {
        let sampler = NoiseSampler::new(TimeGrid::uniform(1.0, 4).unwrap(), None, 0);
        let coeffs = Coefficients::zero().with_f(HolderField::constant(1.0));
        assert_eq!(
            evaluate_mild(0.3, &coeffs, &sampler.path(0), &grid1(), None),
            Err(MildError::NotANode(0.3))
        );
        assert!(matches!(
            evaluate_mild(2.0, &coeffs, &sampler.path(0), &grid1(), None),
            Err(MildError::BeyondPath { .. })
        ));
        let short = Coefficients::zero().with_f(HolderField::constant(1.0).with_horizon(0.5));
        assert!(matches!(
            evaluate_mild(0.75, &short, &sampler.path(0), &grid1(), None),
            Err(MildError::FieldHorizon { .. })
        ));
    }

    #[test]
    fn second_moment_trivial_cases() {
        let grid = GridSpec::covering(1, 2.0, 1.0 / 64.0).unwrap();
        let opts = MomentOptions::default();
        let constant = Coefficients::zero().with_f(HolderField::constant(2.0));
        assert_eq!(
            second_moment_p2(0.25, &[0.5], Some(&[0.0]), &constant, &grid, None, opts).unwrap(),
            0.0
        );
        let cap = Coefficients::zero().with_f(HolderField::capped_power(0.5));
        assert_eq!(
            second_moment_p2(0.25, &[0.5], Some(&[0.5]), &cap, &grid, None, opts).unwrap(),
            0.0
        );
        let jump_only =
            Coefficients::zero().with_g(HolderField::capped_power(0.5), MarkFactor::Constant { value: 1.0 });
        assert_eq!(
            second_moment_p2(0.25, &[0.5], None, &jump_only, &grid, None, opts),
            Err(MildError::MissingLevyMeasure)
        );
    }
}
